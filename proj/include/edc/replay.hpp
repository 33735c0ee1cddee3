#pragma once

#include "edc/backend.hpp"
#include "edc/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace edc {

// Replay file layout (all integers little-endian):
//
//   "EDCR"  u32 version  u32 header_len  header JSON (header_len bytes)
//   record*: u32 window_len  u32 token[window_len]  f32 value[vocab_size]
//
// The header JSON holds {"descriptor", "record_count", "metadata"}.

inline constexpr char kReplayMagic[4] = {'E', 'D', 'C', 'R'};
inline constexpr std::uint32_t kReplayVersion = 1;

struct ReplayHeader {
    BackendDescriptor source;
    std::uint64_t record_count = 0;
    nlohmann::json metadata = nlohmann::json::object();
};

/// Evaluates every window on backend and streams (window, values) records to
/// sink. Values are stored as float32; backends whose output is float32-exact
/// replay bit-identically. Throws IOError or propagates backend errors.
void record_session(const Backend& backend, std::span<const std::span<const TokenId>> windows,
                    std::ostream& sink, const nlohmann::json& metadata = nlohmann::json::object());

/// Re-serves a recorded session. Record offsets are indexed on open and the
/// values are read on demand, so files larger than memory are fine.
/// descriptor() reports kind "replay"; provenance() reports the recorded source.
class ReplayBackend final : public Backend {
public:
    /// Throws IOError or ReplayCorrupt (bad magic, truncated record, count mismatch).
    explicit ReplayBackend(const std::filesystem::path& path);
    ~ReplayBackend() override;

    ReplayBackend(const ReplayBackend&) = delete;
    ReplayBackend& operator=(const ReplayBackend&) = delete;

    const BackendDescriptor& descriptor() const override { return desc_; }
    BackendDescriptor provenance() const override { return header_.source; }
    BackendTraits traits() const override { return {false, 1}; }

    const ReplayHeader& header() const { return header_; }
    const nlohmann::json& metadata() const { return header_.metadata; }
    bool contains(std::span<const TokenId> window) const;

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override;

private:
    int fd_ = -1;
    ReplayHeader header_;
    BackendDescriptor desc_;
    std::map<TokenSequence, std::uint64_t, SequenceLess> index_;
};

} // namespace edc
