#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace edc {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Unnormalized next-token scores, one per vocabulary entry.
using LogitsVector = std::vector<double>;

/// Lexicographic order usable for heterogeneous lookup with spans.
struct SequenceLess {
    using is_transparent = void;
    bool operator()(std::span<const TokenId> a, std::span<const TokenId> b) const {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    }
};

} // namespace edc
