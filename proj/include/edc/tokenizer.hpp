#pragma once

#include "edc/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace edc {

/// Tokenizers built into the local backends.
///
/// Bytes: one token per UTF-8 byte, vocabulary 256.
/// Words: maximal runs of non-whitespace; vocabulary built from a corpus by
/// descending frequency (ties broken lexicographically), capped, with id 0
/// reserved for out-of-vocabulary words. Decoding joins words with a single
/// space, so word round-trips are exact only up to whitespace normalization.
class Tokenizer {
public:
    enum class Kind { Bytes, Words };

    static Tokenizer bytes();
    static Tokenizer words_from_corpus(std::string_view text, std::size_t vocab_cap);

    Kind kind() const { return kind_; }
    std::size_t vocab_size() const;
    /// "bytes" or "words-<vocab_size>".
    std::string id() const;

    TokenSequence encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> tokens) const;

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);

    static constexpr TokenId kUnknownWord = 0;

private:
    Tokenizer() = default;

    Kind kind_ = Kind::Bytes;
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> word_ids_;
};

} // namespace edc
