#include "edc/backend.hpp"

#include "edc/entropy.hpp"
#include "edc/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace edc {

namespace {

constexpr const char* kModule = "model_backend";

TokenSequence byte_tokenize(const BackendDescriptor& d, std::string_view text) {
    if (d.vocab_size < 256) {
        fail(Errc::UnsupportedOperation, kModule,
             "byte tokenization needs a vocabulary of at least 256 (" + d.name + ")");
    }
    return Tokenizer::bytes().encode(text);
}

} // namespace

std::string_view to_string(BackendKind kind) {
    switch (kind) {
    case BackendKind::NGram: return "ngram";
    case BackendKind::Replay: return "replay";
    case BackendKind::Remote: return "remote";
    case BackendKind::Uniform: return "uniform";
    case BackendKind::Delta: return "delta";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(std::string_view name) {
    for (auto k : {BackendKind::NGram, BackendKind::Replay, BackendKind::Remote,
                   BackendKind::Uniform, BackendKind::Delta}) {
        if (to_string(k) == name) return k;
    }
    fail(Errc::ConfigError, kModule, "unknown backend kind '" + std::string(name) + "'");
}

nlohmann::json to_json(const BackendDescriptor& d) {
    return {
        {"name", d.name},
        {"vocab_size", d.vocab_size},
        {"kind", std::string(to_string(d.kind))},
        {"tokenizer_id", d.tokenizer_id},
        {"context_limit", d.context_limit},
        {"returns", d.output == OutputKind::Logits ? "logits" : "probs"},
    };
}

BackendDescriptor descriptor_from_json(const nlohmann::json& j) {
    BackendDescriptor d;
    d.name = j.at("name").get<std::string>();
    d.vocab_size = j.at("vocab_size").get<std::size_t>();
    d.kind = backend_kind_from_string(j.at("kind").get<std::string>());
    d.tokenizer_id = j.at("tokenizer_id").get<std::string>();
    d.context_limit = j.value("context_limit", std::size_t{0});
    const std::string returns = j.value("returns", std::string("logits"));
    if (returns != "logits" && returns != "probs") {
        fail(Errc::ConfigError, kModule, "descriptor 'returns' must be logits or probs");
    }
    d.output = returns == "logits" ? OutputKind::Logits : OutputKind::Probs;
    if (d.vocab_size < 2) fail(Errc::ConfigError, kModule, "vocab_size must be at least 2");
    return d;
}

TokenSequence Backend::tokenize(std::string_view) const {
    fail(Errc::UnsupportedOperation, kModule,
         "backend '" + descriptor().name + "' does not tokenize");
}

std::optional<std::string> Backend::detokenize(std::span<const TokenId>) const {
    return std::nullopt;
}

void Backend::check_context(std::span<const TokenId> context) const {
    const auto& d = descriptor();
    if (context.empty()) fail(Errc::BackendError, kModule, "empty context");
    if (d.context_limit != 0 && context.size() > d.context_limit) {
        fail(Errc::ContextTooLong, kModule,
             "context of " + std::to_string(context.size()) + " tokens exceeds limit " +
                 std::to_string(d.context_limit));
    }
    for (TokenId t : context) {
        if (t >= d.vocab_size) {
            fail(Errc::BackendError, kModule,
                 "token id " + std::to_string(t) + " outside vocabulary of " +
                     std::to_string(d.vocab_size));
        }
    }
}

void Backend::check_output(const LogitsVector& out) const {
    if (out.size() != descriptor().vocab_size) {
        fail(Errc::BackendError, kModule,
             "backend returned " + std::to_string(out.size()) + " values, expected " +
                 std::to_string(descriptor().vocab_size));
    }
    for (double v : out) {
        if (!std::isfinite(v)) fail(Errc::BackendError, kModule, "backend returned a non-finite value");
    }
}

LogitsVector Backend::evaluate(std::span<const TokenId> context) const {
    LogitsVector out;
    evaluate_into(context, out);
    return out;
}

void Backend::evaluate_into(std::span<const TokenId> context, LogitsVector& out) const {
    check_context(context);
    out.resize(descriptor().vocab_size);
    do_evaluate(context, out);
    check_output(out);
}

std::vector<LogitsVector> Backend::evaluate_batch(
    std::span<const std::span<const TokenId>> contexts) const {
    for (const auto& c : contexts) check_context(c);
    auto out = do_evaluate_batch(contexts);
    if (out.size() != contexts.size()) {
        fail(Errc::BackendError, kModule, "batch evaluation returned the wrong number of vectors");
    }
    for (const auto& v : out) check_output(v);
    return out;
}

std::vector<LogitsVector> Backend::do_evaluate_batch(
    std::span<const std::span<const TokenId>> contexts) const {
    std::vector<LogitsVector> out(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        out[i].resize(descriptor().vocab_size);
        do_evaluate(contexts[i], out[i]);
    }
    return out;
}

void to_distribution_inplace(OutputKind output, std::span<double> values) {
    if (output == OutputKind::Logits) {
        softmax_inplace(values);
    } else {
        normalize_probs_inplace(values);
    }
}

UniformBackend::UniformBackend(std::size_t vocab_size) {
    if (vocab_size < 2) fail(Errc::ConfigError, kModule, "vocab_size must be at least 2");
    desc_.name = "uniform-" + std::to_string(vocab_size);
    desc_.vocab_size = vocab_size;
    desc_.kind = BackendKind::Uniform;
    desc_.tokenizer_id = vocab_size >= 256 ? "bytes" : "none";
}

TokenSequence UniformBackend::tokenize(std::string_view text) const {
    return byte_tokenize(desc_, text);
}

std::optional<std::string> UniformBackend::detokenize(std::span<const TokenId> tokens) const {
    if (desc_.vocab_size < 256) return std::nullopt;
    return Tokenizer::bytes().decode(tokens);
}

void UniformBackend::do_evaluate(std::span<const TokenId>, LogitsVector& out) const {
    std::fill(out.begin(), out.end(), 0.0);
}

DeltaBackend::DeltaBackend(std::size_t vocab_size, Rule rule, std::string rule_name)
    : rule_(std::move(rule)) {
    if (vocab_size < 2) fail(Errc::ConfigError, kModule, "vocab_size must be at least 2");
    desc_.name = "delta-" + rule_name + "-" + std::to_string(vocab_size);
    desc_.vocab_size = vocab_size;
    desc_.kind = BackendKind::Delta;
    desc_.tokenizer_id = vocab_size >= 256 ? "bytes" : "none";
}

DeltaBackend DeltaBackend::constant(std::size_t vocab_size, TokenId target) {
    if (target >= vocab_size) fail(Errc::ConfigError, kModule, "delta target outside vocabulary");
    return DeltaBackend(
        vocab_size, [target](std::span<const TokenId>) { return target; },
        "const" + std::to_string(target));
}

DeltaBackend DeltaBackend::echo_last(std::size_t vocab_size) {
    return DeltaBackend(
        vocab_size, [](std::span<const TokenId> ctx) { return ctx.back(); }, "last");
}

TokenSequence DeltaBackend::tokenize(std::string_view text) const {
    return byte_tokenize(desc_, text);
}

std::optional<std::string> DeltaBackend::detokenize(std::span<const TokenId> tokens) const {
    if (desc_.vocab_size < 256) return std::nullopt;
    return Tokenizer::bytes().decode(tokens);
}

void DeltaBackend::do_evaluate(std::span<const TokenId> context, LogitsVector& out) const {
    const TokenId target = rule_(context);
    if (target >= out.size()) fail(Errc::BackendError, kModule, "delta rule produced an invalid token");
    std::fill(out.begin(), out.end(), 0.0);
    out[target] = kLogitGap;
}

} // namespace edc
