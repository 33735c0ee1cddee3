#include <doctest.h>

#include "edc/backend.hpp"
#include "edc/entropy.hpp"
#include "edc/error.hpp"
#include "edc/ngram.hpp"
#include "support/helpers.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

using namespace edc;
using namespace testing_support;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an edc::Error");
    return Errc::ConfigError;
}

std::vector<double> probs_of(const Backend& b, const TokenSequence& ctx) {
    return softmax_stable(b.evaluate(ctx));
}

} // namespace

TEST_CASE("byte tokenizer round-trips arbitrary bytes") {
    const auto t = Tokenizer::bytes();
    const std::string text = "na\xC3\xAFve \x01\xFF";
    CHECK(t.encode(text).size() == text.size());
    CHECK(t.decode(t.encode(text)) == text);
    CHECK(t.id() == "bytes");
    CHECK(t.vocab_size() == 256);
}

TEST_CASE("word tokenizer ranks by frequency with lexicographic ties") {
    const auto t = Tokenizer::words_from_corpus("b a c a b a zeta", 3);
    CHECK(t.vocab_size() == 3);
    CHECK(t.id() == "words-3");
    CHECK(t.encode("a b c") == TokenSequence{1, 2, Tokenizer::kUnknownWord});
    CHECK(t.decode(TokenSequence{1, 2}) == "a b");
    const auto round = Tokenizer::from_json(t.to_json());
    CHECK(round.encode("b a zeta") == t.encode("b a zeta"));
}

TEST_CASE("bigram probabilities match hand counts") {
    // 0 1 0 2 0 : after 0 we saw 1 and 2 once each; after 1 and 2 we saw 0
    const TokenSequence toy{0, 1, 0, 2, 0};
    const auto model = NGramModel::train(toy, 2, 1.0, 3);
    CHECK(model.probability(TokenSequence{0}, 1) == doctest::Approx(2.0 / 5.0));
    CHECK(model.probability(TokenSequence{0}, 2) == doctest::Approx(2.0 / 5.0));
    CHECK(model.probability(TokenSequence{0}, 0) == doctest::Approx(1.0 / 5.0));
    CHECK(model.probability(TokenSequence{1}, 0) == doctest::Approx(2.0 / 4.0));
    CHECK(model.probability(TokenSequence{2, 2, 1}, 0) == doctest::Approx(2.0 / 4.0));

    NGramBackend backend(std::make_shared<const NGramModel>(model));
    const auto p = probs_of(backend, TokenSequence{0});
    CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("unseen and too-short contexts give the uniform distribution") {
    const TokenSequence toy{0, 1, 2, 0, 1, 2, 1};
    const auto model = std::make_shared<const NGramModel>(NGramModel::train(toy, 3, 0.5, 4));
    NGramBackend backend(model);
    for (const auto& ctx : {TokenSequence{3, 3}, TokenSequence{1}, TokenSequence{2, 2}}) {
        const auto p = probs_of(backend, ctx);
        for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("unigram model ignores context") {
    const auto model = NGramModel::train(TokenSequence{0, 0, 1}, 1, 1.0, 2);
    CHECK(model.probability(TokenSequence{1}, 0) == doctest::Approx(3.0 / 5.0));
    CHECK(model.probability(TokenSequence{0, 1, 1}, 0) == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("n-gram output depends only on the last m-1 tokens") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<TokenId> tok(0, 5);
    TokenSequence train(400);
    for (auto& t : train) t = tok(rng);
    NGramBackend backend(std::make_shared<const NGramModel>(NGramModel::train(train, 4, 0.1, 6)));
    for (int trial = 0; trial < 50; ++trial) {
        TokenSequence suffix(3), a, b;
        for (auto& t : suffix) t = tok(rng);
        for (int i = 0; i < trial % 7; ++i) a.push_back(tok(rng));
        for (int i = 0; i < (trial * 3) % 11; ++i) b.push_back(tok(rng));
        a.insert(a.end(), suffix.begin(), suffix.end());
        b.insert(b.end(), suffix.begin(), suffix.end());
        CHECK(backend.evaluate(a) == backend.evaluate(b));
    }
}

TEST_CASE("n-gram distributions always have full support") {
    const auto model = NGramModel::train(Tokenizer::bytes().encode("abracadabra"), 3, 0.01, Tokenizer::bytes());
    NGramBackend backend(std::make_shared<const NGramModel>(model));
    const auto p = probs_of(backend, Tokenizer::bytes().encode("xab"));
    double total = 0.0;
    for (double v : p) {
        CHECK(v > 0.0);
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p['r'] == doctest::Approx(2.01 / 4.56).epsilon(1e-12));
}

TEST_CASE("training errors") {
    CHECK(code_of([] { NGramModel::train(TokenSequence{0, 1}, 0, 1.0, 2); }) == Errc::InvalidOrder);
    CHECK(code_of([] { NGramModel::train(TokenSequence{0, 1}, 3, 1.0, 2); }) == Errc::InsufficientTraining);
    CHECK(code_of([] { NGramModel::train(TokenSequence{0, 1}, 2, 0.0, 2); }) == Errc::OutOfRange);
    CHECK(code_of([] { NGramModel::train(TokenSequence{0, 5}, 2, 1.0, 2); }) == Errc::OutOfRange);
}

TEST_CASE("model files are byte-deterministic and round-trip") {
    TempDir dir;
    const auto tokens = Tokenizer::bytes().encode(slurp(alice_path()));
    NGramModel::train(tokens, 3, 0.01, Tokenizer::bytes()).save(dir / "a.json");
    NGramModel::train(tokens, 3, 0.01, Tokenizer::bytes()).save(dir / "b.json");
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

    const auto loaded = NGramModel::load(dir / "a.json");
    const auto fresh = NGramModel::train(tokens, 3, 0.01, Tokenizer::bytes());
    CHECK(loaded.order() == 3);
    CHECK(loaded.context_count() == fresh.context_count());
    NGramBackend a(std::make_shared<const NGramModel>(loaded)), b(std::make_shared<const NGramModel>(fresh));
    const TokenSequence ctx = Tokenizer::bytes().encode("Alice was");
    CHECK(a.evaluate(ctx) == b.evaluate(ctx));

    spit(dir / "junk.json", "{\"format\": \"other\"}");
    CHECK(code_of([&] { NGramModel::load(dir / "junk.json"); }) == Errc::ConfigError);
    CHECK(code_of([&] { NGramModel::load(dir / "missing.json"); }) == Errc::IOError);
}

TEST_CASE("backend input validation") {
    UniformBackend u(4);
    CHECK(code_of([&] { u.evaluate(TokenSequence{}); }) == Errc::BackendError);
    CHECK(code_of([&] { u.evaluate(TokenSequence{0, 4}); }) == Errc::BackendError);
    CHECK(code_of([&] { u.tokenize("text"); }) == Errc::UnsupportedOperation);
    CHECK(code_of([] { UniformBackend(1); }) == Errc::ConfigError);
}

TEST_CASE("uniform backend returns zero logits") {
    UniformBackend u(256);
    const auto logits = u.evaluate(TokenSequence{1, 2, 3});
    CHECK(logits.size() == 256);
    for (double v : logits) CHECK(v == 0.0);
    CHECK(entropy_bits(softmax_stable(logits)) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(u.descriptor().kind == BackendKind::Uniform);
    CHECK(u.tokenize("ab") == TokenSequence{'a', 'b'});
}

TEST_CASE("delta backends concentrate all mass on one token") {
    auto echo = DeltaBackend::echo_last(256);
    const auto p = softmax_stable(echo.evaluate(TokenSequence{5, 9}));
    CHECK(p[9] > 1.0 - 1e-12);
    CHECK(entropy_bits(p) <= 1e-10);

    auto fixed = DeltaBackend::constant(16, 3);
    CHECK(softmax_stable(fixed.evaluate(TokenSequence{1}))[3] > 1.0 - 1e-12);
    CHECK(code_of([] { DeltaBackend::constant(4, 4); }) == Errc::ConfigError);
}

TEST_CASE("descriptor JSON round-trip") {
    BackendDescriptor d{"m", 300, BackendKind::Remote, "words-300", 2048, OutputKind::Probs};
    CHECK(descriptor_from_json(to_json(d)) == d);
    auto j = to_json(d);
    j["kind"] = "gpt";
    CHECK(code_of([&] { descriptor_from_json(j); }) == Errc::ConfigError);
}

TEST_CASE("batch evaluation equals one-by-one evaluation") {
    const auto model = std::make_shared<const NGramModel>(
        NGramModel::train(Tokenizer::bytes().encode(slurp(alice_path())), 3, 0.01, Tokenizer::bytes()));
    NGramBackend backend(model);
    const auto text = Tokenizer::bytes().encode("Down the Rabbit-Hole");
    std::vector<std::span<const TokenId>> windows;
    for (std::size_t i = 0; i + 4 <= text.size(); ++i) windows.push_back(std::span(text).subspan(i, 4));
    const auto batch = backend.evaluate_batch(windows);
    for (std::size_t i = 0; i < windows.size(); ++i) CHECK(batch[i] == backend.evaluate(windows[i]));
}
