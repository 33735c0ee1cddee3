#include "edc/tokenizer.hpp"

#include "edc/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>

namespace edc {

namespace {

constexpr const char* kModule = "model_backend";

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) fn(text.substr(start, i - start));
    }
}

} // namespace

Tokenizer Tokenizer::bytes() { return Tokenizer(); }

Tokenizer Tokenizer::words_from_corpus(std::string_view text, std::size_t vocab_cap) {
    if (vocab_cap < 2) {
        fail(Errc::ConfigError, kModule, "word vocabulary cap must be at least 2");
    }
    std::map<std::string, std::size_t, std::less<>> freq;
    for_each_word(text, [&](std::string_view w) { ++freq[std::string(w)]; });

    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Tokenizer t;
    t.kind_ = Kind::Words;
    t.words_.push_back("<unk>");
    for (const auto& [word, count] : ranked) {
        if (t.words_.size() >= vocab_cap) break;
        t.words_.push_back(word);
    }
    for (std::size_t i = 1; i < t.words_.size(); ++i) {
        t.word_ids_.emplace(t.words_[i], static_cast<TokenId>(i));
    }
    return t;
}

std::size_t Tokenizer::vocab_size() const {
    return kind_ == Kind::Bytes ? 256 : std::max<std::size_t>(words_.size(), 2);
}

std::string Tokenizer::id() const {
    return kind_ == Kind::Bytes ? "bytes" : "words-" + std::to_string(vocab_size());
}

TokenSequence Tokenizer::encode(std::string_view text) const {
    TokenSequence out;
    if (kind_ == Kind::Bytes) {
        out.reserve(text.size());
        for (char c : text) out.push_back(static_cast<unsigned char>(c));
        return out;
    }
    for_each_word(text, [&](std::string_view w) {
        auto it = word_ids_.find(std::string(w));
        out.push_back(it == word_ids_.end() ? kUnknownWord : it->second);
    });
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> tokens) const {
    std::string out;
    if (kind_ == Kind::Bytes) {
        out.reserve(tokens.size());
        for (TokenId t : tokens) {
            if (t > 255) fail(Errc::OutOfRange, kModule, "byte token out of range");
            out.push_back(static_cast<char>(t));
        }
        return out;
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= words_.size()) fail(Errc::OutOfRange, kModule, "word token out of range");
        if (i > 0) out.push_back(' ');
        out += words_[tokens[i]];
    }
    return out;
}

nlohmann::json Tokenizer::to_json() const {
    if (kind_ == Kind::Bytes) return {{"kind", "bytes"}};
    return {{"kind", "words"}, {"words", words_}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "bytes") return bytes();
    if (kind != "words") fail(Errc::ConfigError, kModule, "unknown tokenizer kind '" + kind + "'");
    Tokenizer t;
    t.kind_ = Kind::Words;
    t.words_ = j.at("words").get<std::vector<std::string>>();
    if (t.words_.empty()) fail(Errc::ConfigError, kModule, "word tokenizer without <unk> entry");
    for (std::size_t i = 1; i < t.words_.size(); ++i) {
        t.word_ids_.emplace(t.words_[i], static_cast<TokenId>(i));
    }
    return t;
}

} // namespace edc
