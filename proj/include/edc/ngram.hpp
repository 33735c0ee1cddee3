#pragma once

#include "edc/backend.hpp"
#include "edc/tokenizer.hpp"
#include "edc/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace edc {

struct NextTokenCounts {
    /// Sorted by token id; every count >= 1.
    std::vector<std::pair<TokenId, std::uint64_t>> entries;
    std::uint64_t total = 0;
};

/// Add-lambda smoothed n-gram model of order m:
///
///   p(y | c) = (count(c, y) + lambda) / (count(c, .) + lambda * |V|)
///
/// where c is the last m - 1 tokens of the supplied context. Only contexts of
/// exactly m - 1 tokens are counted, so a shorter context is unseen and
/// yields the uniform distribution.
class NGramModel {
public:
    static NGramModel train(std::span<const TokenId> tokens, std::size_t order, double lambda,
                            Tokenizer tokenizer);
    /// Explicit vocabulary, for corpora that are already token ids.
    static NGramModel train(std::span<const TokenId> tokens, std::size_t order, double lambda,
                            std::size_t vocab_size, Tokenizer tokenizer = Tokenizer::bytes());

    std::size_t order() const { return order_; }
    double lambda() const { return lambda_; }
    std::size_t vocab_size() const { return vocab_size_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    std::size_t context_count() const { return counts_.size(); }

    /// Counts for an exact context key, or nullptr when unseen.
    const NextTokenCounts* find(std::span<const TokenId> key) const;

    /// The last min(|context|, m - 1) tokens; the lookup key for context.
    std::span<const TokenId> effective_context(std::span<const TokenId> context) const;

    /// Writes log p(y | context) for every y into out (length vocab_size).
    void log_probabilities(std::span<const TokenId> context, std::span<double> out) const;

    double probability(std::span<const TokenId> context, TokenId next) const;

    nlohmann::json to_json() const;
    static NGramModel from_json(const nlohmann::json& j);

    /// Byte-deterministic for identical models.
    void save(const std::filesystem::path& path) const;
    static NGramModel load(const std::filesystem::path& path);

private:
    NGramModel(std::size_t order, double lambda, std::size_t vocab_size, Tokenizer tokenizer);

    std::size_t order_;
    double lambda_;
    std::size_t vocab_size_;
    Tokenizer tokenizer_;
    std::map<TokenSequence, NextTokenCounts, SequenceLess> counts_;
};

class NGramBackend final : public Backend {
public:
    explicit NGramBackend(std::shared_ptr<const NGramModel> model, std::string name = {});

    const BackendDescriptor& descriptor() const override { return desc_; }
    const NGramModel& model() const { return *model_; }

    TokenSequence tokenize(std::string_view text) const override;
    std::optional<std::string> detokenize(std::span<const TokenId> tokens) const override;

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override;

private:
    std::shared_ptr<const NGramModel> model_;
    BackendDescriptor desc_;
};

} // namespace edc
