#pragma once

#include "edc/tokenizer.hpp"
#include "edc/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edc {

enum class BackendKind { NGram, Replay, Remote, Uniform, Delta };

std::string_view to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view name);

/// Whether evaluate() yields raw logits or already-normalized probabilities.
enum class OutputKind { Logits, Probs };

struct BackendDescriptor {
    std::string name;
    std::size_t vocab_size = 0;
    BackendKind kind = BackendKind::Uniform;
    std::string tokenizer_id;
    /// Longest accepted context; 0 means unlimited.
    std::size_t context_limit = 0;
    OutputKind output = OutputKind::Logits;

    bool operator==(const BackendDescriptor&) const = default;
};

/// How the profiler may drive a backend. Not part of provenance.
struct BackendTraits {
    /// Safe for concurrent evaluate() calls.
    bool concurrent = true;
    /// Windows to submit per evaluate_batch() call.
    std::size_t preferred_batch = 1;
};

nlohmann::json to_json(const BackendDescriptor& d);
BackendDescriptor descriptor_from_json(const nlohmann::json& j);

/// Anything that maps a token context to a full next-token vector.
///
/// evaluate() must be a pure function of the supplied context: backends that
/// cache internally have to stay observationally stateless. Inputs (non-empty
/// context, ids below vocab_size, context limit) and outputs (length, finite
/// entries) are validated here, so implementations only compute.
class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;
    virtual BackendTraits traits() const { return {}; }

    /// Descriptor of whatever produced the logits. Differs from descriptor()
    /// only for backends that re-serve recorded output.
    virtual BackendDescriptor provenance() const { return descriptor(); }

    /// Throws UnsupportedOperation unless overridden.
    virtual TokenSequence tokenize(std::string_view text) const;

    /// Inverse of tokenize() where the backend supports it.
    virtual std::optional<std::string> detokenize(std::span<const TokenId> tokens) const;

    LogitsVector evaluate(std::span<const TokenId> context) const;

    /// Writes into out, resizing it to vocab_size. Lets callers reuse a buffer.
    void evaluate_into(std::span<const TokenId> context, LogitsVector& out) const;

    std::vector<LogitsVector> evaluate_batch(
        std::span<const std::span<const TokenId>> contexts) const;

protected:
    virtual void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const = 0;
    virtual std::vector<LogitsVector> do_evaluate_batch(
        std::span<const std::span<const TokenId>> contexts) const;

private:
    void check_context(std::span<const TokenId> context) const;
    void check_output(const LogitsVector& out) const;
};

/// Converts a backend's output vector into a distribution in place:
/// stable softmax for logits, validation + rescaling for probabilities.
void to_distribution_inplace(OutputKind output, std::span<double> values);

/// Every context maps to all-zero logits (uniform distribution).
/// Tokenizes with the byte tokenizer when vocab_size >= 256.
class UniformBackend final : public Backend {
public:
    explicit UniformBackend(std::size_t vocab_size = 256);

    const BackendDescriptor& descriptor() const override { return desc_; }
    TokenSequence tokenize(std::string_view text) const override;
    std::optional<std::string> detokenize(std::span<const TokenId> tokens) const override;

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override;

private:
    BackendDescriptor desc_;
};

/// Puts a finite logit gap on a single predicted token; the softmax tail
/// mass stays below 1e-12 for vocabularies up to 2^32 entries.
class DeltaBackend final : public Backend {
public:
    using Rule = std::function<TokenId(std::span<const TokenId>)>;

    static constexpr double kLogitGap = 64.0;

    DeltaBackend(std::size_t vocab_size, Rule rule, std::string rule_name);

    /// Always predicts target.
    static DeltaBackend constant(std::size_t vocab_size, TokenId target);
    /// Predicts the last context token, so targets vary across windows.
    static DeltaBackend echo_last(std::size_t vocab_size);

    const BackendDescriptor& descriptor() const override { return desc_; }
    TokenSequence tokenize(std::string_view text) const override;
    std::optional<std::string> detokenize(std::span<const TokenId> tokens) const override;

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override;

private:
    BackendDescriptor desc_;
    Rule rule_;
};

} // namespace edc
