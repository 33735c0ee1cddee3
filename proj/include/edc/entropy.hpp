#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace edc {

/// Probability vector over a vocabulary.
using Distribution = std::vector<double>;

inline constexpr double kDistributionTolerance = 1e-9;
inline constexpr double kJensenTolerance = 1e-6;
inline constexpr double kUndefinedEntropyFloor = 1e-9;

/// exp(x - max) / sum. Throws NonFiniteInput on NaN/inf entries.
Distribution softmax_stable(std::span<const double> logits);

/// In-place variant; the buffer is overwritten with probabilities.
void softmax_inplace(std::span<double> values);

/// Validates a probability vector returned directly by a backend and rescales
/// it to sum to exactly 1 (within rounding). Entries must be finite and
/// non-negative and sum to 1 within 1e-6 before rescaling.
void normalize_probs_inplace(std::span<double> probs);

/// Shannon entropy in bits with 0 log 0 = 0.
/// Throws InvalidDistribution on negative entries or |sum - 1| > 1e-9.
double entropy_bits(std::span<const double> probs);

/// Elementwise running sum of distributions; mean() is the average
/// predictive distribution. Single-owner; shards merge pairwise.
class MeanDistributionAccumulator {
public:
    explicit MeanDistributionAccumulator(std::size_t vocab_size);

    void add(std::span<const double> probs);
    void merge(const MeanDistributionAccumulator& other);

    std::size_t vocab_size() const { return sum_.size(); }
    std::uint64_t count() const { return count_; }
    const std::vector<double>& running_sum() const { return sum_; }

    /// Throws OutOfRange when nothing was absorbed.
    Distribution mean() const;
    /// Writes the mean into out, reusing its storage.
    void mean_into(std::vector<double>& out) const;

private:
    std::vector<double> sum_;
    std::uint64_t count_ = 0;
};

/// h / H clamped to [0, 1]. nullopt (Undefined) when H < 1e-9 bits.
/// Throws JensenViolation when h > H + 1e-6 and OutOfRange on negative input.
std::optional<double> uncertainty_index(double h_bits, double marginal_bits);

/// Information Gain Span: u_small * (1 - u_large). Both inputs in [0, 1].
double igs(double u_small, double u_large);

} // namespace edc
