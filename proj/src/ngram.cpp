#include "edc/ngram.hpp"

#include "edc/error.hpp"
#include "edc/io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace edc {

namespace {

constexpr const char* kModule = "model_backend";
constexpr const char* kFormat = "edc-ngram";
constexpr int kFormatVersion = 1;

} // namespace

NGramModel::NGramModel(std::size_t order, double lambda, std::size_t vocab_size,
                       Tokenizer tokenizer)
    : order_(order), lambda_(lambda), vocab_size_(vocab_size), tokenizer_(std::move(tokenizer)) {}

NGramModel NGramModel::train(std::span<const TokenId> tokens, std::size_t order, double lambda,
                             Tokenizer tokenizer) {
    const std::size_t vocab = tokenizer.vocab_size();
    return train(tokens, order, lambda, vocab, std::move(tokenizer));
}

NGramModel NGramModel::train(std::span<const TokenId> tokens, std::size_t order, double lambda,
                             std::size_t vocab_size, Tokenizer tokenizer) {
    if (order < 1) fail(Errc::InvalidOrder, kModule, "n-gram order must be at least 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        fail(Errc::OutOfRange, kModule, "smoothing constant lambda must be positive and finite");
    }
    if (vocab_size < 2) fail(Errc::ConfigError, kModule, "vocab_size must be at least 2");
    if (tokens.size() < order) {
        fail(Errc::InsufficientTraining, kModule,
             "order " + std::to_string(order) + " needs at least " + std::to_string(order) +
                 " training tokens, got " + std::to_string(tokens.size()));
    }
    for (TokenId t : tokens) {
        if (t >= vocab_size) fail(Errc::OutOfRange, kModule, "training token outside vocabulary");
    }

    std::map<TokenSequence, std::map<TokenId, std::uint64_t>, SequenceLess> raw;
    const std::size_t ctx = order - 1;
    for (std::size_t i = ctx; i < tokens.size(); ++i) {
        auto key = tokens.subspan(i - ctx, ctx);
        auto it = raw.find(key);
        if (it == raw.end()) it = raw.emplace(TokenSequence(key.begin(), key.end()), std::map<TokenId, std::uint64_t>{}).first;
        ++it->second[tokens[i]];
    }

    NGramModel model(order, lambda, vocab_size, std::move(tokenizer));
    for (auto& [key, next] : raw) {
        NextTokenCounts c;
        c.entries.assign(next.begin(), next.end());
        for (const auto& [tok, n] : c.entries) c.total += n;
        model.counts_.emplace(key, std::move(c));
    }
    return model;
}

const NextTokenCounts* NGramModel::find(std::span<const TokenId> key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? nullptr : &it->second;
}

std::span<const TokenId> NGramModel::effective_context(std::span<const TokenId> context) const {
    const std::size_t len = std::min(context.size(), order_ - 1);
    return context.last(len);
}

void NGramModel::log_probabilities(std::span<const TokenId> context, std::span<double> out) const {
    if (out.size() != vocab_size_) fail(Errc::LengthMismatch, kModule, "output buffer length mismatch");
    const NextTokenCounts* counts = find(effective_context(context));
    const double total = counts ? static_cast<double>(counts->total) : 0.0;
    const double denom = total + lambda_ * static_cast<double>(vocab_size_);
    const double log_floor = std::log(lambda_ / denom);
    std::fill(out.begin(), out.end(), log_floor);
    if (!counts) return;
    for (const auto& [tok, n] : counts->entries) {
        out[tok] = std::log((static_cast<double>(n) + lambda_) / denom);
    }
}

double NGramModel::probability(std::span<const TokenId> context, TokenId next) const {
    if (next >= vocab_size_) fail(Errc::OutOfRange, kModule, "token outside vocabulary");
    const NextTokenCounts* counts = find(effective_context(context));
    double count = 0.0;
    double total = 0.0;
    if (counts) {
        total = static_cast<double>(counts->total);
        auto it = std::lower_bound(counts->entries.begin(), counts->entries.end(), next,
                                   [](const auto& e, TokenId t) { return e.first < t; });
        if (it != counts->entries.end() && it->first == next) count = static_cast<double>(it->second);
    }
    return (count + lambda_) / (total + lambda_ * static_cast<double>(vocab_size_));
}

nlohmann::json NGramModel::to_json() const {
    nlohmann::json contexts = nlohmann::json::array();
    for (const auto& [key, c] : counts_) {
        nlohmann::json next = nlohmann::json::array();
        for (const auto& [tok, n] : c.entries) next.push_back({tok, n});
        contexts.push_back({key, std::move(next)});
    }
    return {
        {"format", kFormat},
        {"version", kFormatVersion},
        {"order", order_},
        {"lambda", lambda_},
        {"vocab_size", vocab_size_},
        {"tokenizer", tokenizer_.to_json()},
        {"contexts", std::move(contexts)},
    };
}

NGramModel NGramModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kFormatVersion) {
            fail(Errc::ConfigError, kModule, "not an edc n-gram model (format/version mismatch)");
        }
        NGramModel model(j.at("order").get<std::size_t>(), j.at("lambda").get<double>(),
                         j.at("vocab_size").get<std::size_t>(),
                         Tokenizer::from_json(j.at("tokenizer")));
        if (model.order_ < 1) fail(Errc::InvalidOrder, kModule, "stored order must be at least 1");
        if (!(model.lambda_ > 0.0)) fail(Errc::OutOfRange, kModule, "stored lambda must be positive");
        for (const auto& entry : j.at("contexts")) {
            auto key = entry.at(0).get<TokenSequence>();
            NextTokenCounts c;
            for (const auto& pair : entry.at(1)) {
                const auto tok = pair.at(0).get<TokenId>();
                const auto n = pair.at(1).get<std::uint64_t>();
                if (tok >= model.vocab_size_ || n == 0) {
                    fail(Errc::ConfigError, kModule, "corrupt count entry in model file");
                }
                c.entries.emplace_back(tok, n);
                c.total += n;
            }
            model.counts_.emplace(std::move(key), std::move(c));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, kModule, std::string("malformed model file: ") + e.what());
    }
}

void NGramModel::save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json().dump() + "\n");
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
    const std::string text = read_file(path, kModule);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, kModule, "cannot parse model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

NGramBackend::NGramBackend(std::shared_ptr<const NGramModel> model, std::string name)
    : model_(std::move(model)) {
    desc_.name = name.empty() ? "ngram-o" + std::to_string(model_->order()) : std::move(name);
    desc_.vocab_size = model_->vocab_size();
    desc_.kind = BackendKind::NGram;
    desc_.tokenizer_id = model_->tokenizer().id();
}

TokenSequence NGramBackend::tokenize(std::string_view text) const {
    return model_->tokenizer().encode(text);
}

std::optional<std::string> NGramBackend::detokenize(std::span<const TokenId> tokens) const {
    return model_->tokenizer().decode(tokens);
}

void NGramBackend::do_evaluate(std::span<const TokenId> context, LogitsVector& out) const {
    model_->log_probabilities(context, out);
}

} // namespace edc
