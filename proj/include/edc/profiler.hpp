#pragma once

#include "edc/backend.hpp"
#include "edc/error.hpp"
#include "edc/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edc {

/// Start: window i covers tokens [i, i + k). End: window i ends at
/// max_k + i, so windows of every k share their final token.
enum class Alignment { Start, End };

std::string_view to_string(Alignment a);
Alignment alignment_from_string(std::string_view name);

struct ProfileConfig {
    std::vector<std::size_t> k_grid{3, 9, 30, 90, 300, 600};
    std::size_t n_windows = 1000;
    Alignment alignment = Alignment::Start;
    double collapse_threshold = 0.05;
    std::size_t collapse_k_min = 90;
    std::size_t igs_k_small = 3;
    std::size_t igs_k_large = 600;

    /// Throws ConfigError.
    void validate() const;
    std::size_t max_k() const;
    /// max(k_grid) + n_windows.
    std::size_t required_tokens() const;

    bool operator==(const ProfileConfig&) const = default;
};

struct EntropyRecord {
    std::size_t k = 0;
    std::size_t n = 0;
    double h_k = 0.0;
    double H_k = 0.0;
    /// nullopt is Undefined (H_k below 1e-9 bits).
    std::optional<double> u_k;

    bool operator==(const EntropyRecord&) const = default;
};

struct CollapseFlag {
    std::size_t k = 0;
    double u_k = 0.0;

    bool operator==(const CollapseFlag&) const = default;
};

struct GridFailure {
    std::size_t k = 0;
    std::string message;

    bool operator==(const GridFailure&) const = default;
};

/// The Entropy Decay Curve in data form.
struct CognitiveProfile {
    BackendDescriptor backend;
    std::string corpus_id;
    ProfileConfig config;
    std::vector<EntropyRecord> records;
    std::optional<double> igs;
    std::vector<CollapseFlag> collapse_flags;
    /// Grid entries that could not be completed. Empty for a full profile.
    std::vector<GridFailure> failures;

    const EntropyRecord* record_at(std::size_t k) const;
    bool operator==(const CognitiveProfile&) const = default;
};

struct ProfileOptions {
    /// Worker threads for backends that declare concurrency safety.
    std::size_t jobs = 1;
};

/// Raised when a grid entry fails mid-run. Carries the completed records.
class ProfileError : public Error {
public:
    ProfileError(const Error& cause, CognitiveProfile partial)
        : Error(cause), partial_(std::move(partial)) {}
    const CognitiveProfile& partial() const { return partial_; }

private:
    CognitiveProfile partial_;
};

/// n overlapping windows of length k (stride 1). max_k is only used by end
/// alignment. Throws InsufficientTokens.
std::vector<std::span<const TokenId>> extract_windows(std::span<const TokenId> tokens, std::size_t k,
                                                      std::size_t n, Alignment alignment,
                                                      std::size_t max_k = 0);

/// Streams n windows through the backend: h_k is the mean per-window entropy,
/// H_k the entropy of the mean distribution. Only one accumulator and one
/// value buffer per worker are alive at a time. Errors are annotated with k
/// and the window index.
EntropyRecord profile_k(const Backend& backend, std::span<const TokenId> tokens, std::size_t k,
                        std::size_t n, Alignment alignment, std::size_t max_k = 0,
                        const ProfileOptions& options = {});

/// One profile_k per grid entry, then IGS and collapse flags.
/// Config, token-count and context-limit problems throw before any evaluation;
/// a failed grid entry throws ProfileError with the entries completed so far.
CognitiveProfile run_profile(const Backend& backend, std::span<const TokenId> tokens,
                             const ProfileConfig& config, std::string corpus_id,
                             const ProfileOptions& options = {});

/// Records with k >= k_min and a defined u_k below threshold.
std::vector<CollapseFlag> detect_collapse(std::span<const EntropyRecord> records, double threshold,
                                          std::size_t k_min);
std::vector<CollapseFlag> detect_collapse(const CognitiveProfile& profile, double threshold,
                                          std::size_t k_min);

/// u_small * (1 - u_large) from the profile's records; nullopt when either is
/// missing or Undefined.
std::optional<double> profile_igs(const std::vector<EntropyRecord>& records, std::size_t k_small,
                                  std::size_t k_large);

} // namespace edc
