#include <doctest.h>

#include "edc/backend.hpp"
#include "edc/corpus.hpp"
#include "edc/error.hpp"
#include "edc/ngram.hpp"
#include "edc/profiler.hpp"
#include "oracles/brute_force.hpp"
#include "support/helpers.hpp"

#include <atomic>
#include <cmath>

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

TokenSequence alice_tokens() {
    return Tokenizer::bytes().encode(strip_boilerplate(slurp(alice_path()), kAliceMarker).text);
}

ProfileConfig small_config(std::vector<std::size_t> grid, std::size_t n) {
    ProfileConfig c;
    c.k_grid = std::move(grid);
    c.n_windows = n;
    c.igs_k_small = c.k_grid.front();
    c.igs_k_large = c.k_grid.back();
    c.collapse_k_min = c.k_grid.back();
    return c;
}

/// Fails every evaluation whose context is longer than fail_above.
class FailingBackend final : public Backend {
public:
    explicit FailingBackend(std::size_t fail_above) : fail_above_(fail_above) {
        desc_ = {"failing", 256, BackendKind::Uniform, "bytes", 0, OutputKind::Logits};
    }
    const BackendDescriptor& descriptor() const override { return desc_; }

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override {
        if (context.size() > fail_above_) fail(Errc::BackendError, "model_backend", "simulated outage");
        std::fill(out.begin(), out.end(), 0.0);
    }

private:
    std::size_t fail_above_;
    BackendDescriptor desc_;
};

class LimitedBackend final : public Backend {
public:
    LimitedBackend() { desc_ = {"limited", 256, BackendKind::Uniform, "bytes", 50, OutputKind::Logits}; }
    const BackendDescriptor& descriptor() const override { return desc_; }

protected:
    void do_evaluate(std::span<const TokenId>, LogitsVector& out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }

private:
    BackendDescriptor desc_;
};

} // namespace

TEST_CASE("start-aligned windows slide by one token") {
    const TokenSequence t{0, 1, 2, 3, 4, 5, 6};
    const auto w = extract_windows(t, 3, 4, Alignment::Start);
    REQUIRE(w.size() == 4);
    CHECK(w[0].data() == t.data());
    CHECK(w[3].data() == t.data() + 3);
    CHECK(w[3].size() == 3);
    CHECK(code_of([&] { extract_windows(t, 3, 6, Alignment::Start); }) == Errc::InsufficientTokens);
}

TEST_CASE("end-aligned windows share their last token across k") {
    TokenSequence t(20);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<TokenId>(i);
    const auto small = extract_windows(t, 2, 3, Alignment::End, 6);
    const auto large = extract_windows(t, 6, 3, Alignment::End, 6);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(small[i].back() == large[i].back());
        CHECK(large[i].front() == i);
    }
    CHECK(code_of([&] { extract_windows(t, 7, 3, Alignment::End, 6); }) == Errc::ConfigError);
}

TEST_CASE("n-gram profile equals the brute-force oracle") {
    const auto tokens = alice_tokens();
    const auto model = std::make_shared<const NGramModel>(NGramModel::train(tokens, 3, 0.01, Tokenizer::bytes()));
    NGramBackend backend(model);
    const auto config = small_config({1, 2, 3, 9, 30}, 60);
    const auto profile = run_profile(backend, tokens, config, "alice");
    REQUIRE(profile.records.size() == config.k_grid.size());
    for (const auto& r : profile.records) {
        const auto o = oracle::ngram_profile(tokens, 3, 0.01, 256, tokens, r.k, 60);
        CHECK(std::abs(r.h_k - o.h) <= 1e-9);
        CHECK(std::abs(r.H_k - o.H) <= 1e-9);
        CHECK(r.n == 60);
    }
}

TEST_CASE("end-aligned n-gram profile equals the oracle") {
    const auto tokens = alice_tokens();
    const auto model = std::make_shared<const NGramModel>(NGramModel::train(tokens, 4, 0.05, Tokenizer::bytes()));
    NGramBackend backend(model);
    auto config = small_config({2, 10, 100}, 40);
    config.alignment = Alignment::End;
    const auto profile = run_profile(backend, tokens, config, "alice");
    for (const auto& r : profile.records) {
        const auto o = oracle::ngram_profile(tokens, 4, 0.05, 256, tokens, r.k, 40, true, 100);
        CHECK(std::abs(r.h_k - o.h) <= 1e-9);
        CHECK(std::abs(r.H_k - o.H) <= 1e-9);
    }
    // every window of length >= order-1 conditions on the same tokens
    CHECK(std::abs(*profile.record_at(10)->u_k - *profile.record_at(100)->u_k) <= 1e-12);
}

TEST_CASE("uniform backend gives u = 1 at every k") {
    UniformBackend u(256);
    const auto tokens = alice_tokens();
    const auto profile = run_profile(u, tokens, small_config({3, 9, 30, 90, 300, 600}, 100), "alice");
    for (const auto& r : profile.records) {
        CHECK(std::abs(*r.u_k - 1.0) <= 1e-12);
        CHECK(std::abs(r.h_k - 8.0) <= 1e-9);
        CHECK(std::abs(r.H_k - 8.0) <= 1e-9);
    }
    CHECK(profile.collapse_flags.empty());
    REQUIRE(profile.igs.has_value());
    CHECK(std::abs(*profile.igs) <= 1e-12);
}

TEST_CASE("echo-last delta backend gives u = 0") {
    auto delta = DeltaBackend::echo_last(256);
    const auto tokens = alice_tokens();
    auto config = small_config({3, 9, 30}, 200);
    config.collapse_k_min = 9;
    const auto profile = run_profile(delta, tokens, config, "alice");
    for (const auto& r : profile.records) {
        CHECK(r.h_k <= 1e-9);
        CHECK(r.H_k > 1.0);
        REQUIRE(r.u_k.has_value());
        CHECK(*r.u_k <= 1e-9);
    }
    REQUIRE(profile.collapse_flags.size() == 2);
    CHECK(profile.collapse_flags[0].k == 9);
    CHECK(profile.collapse_flags[1].k == 30);
}

TEST_CASE("constant delta backend leaves u Undefined and never flags collapse") {
    auto delta = DeltaBackend::constant(256, 'e');
    const auto tokens = alice_tokens();
    const auto profile = run_profile(delta, tokens, small_config({3, 9}, 50), "alice");
    for (const auto& r : profile.records) CHECK_FALSE(r.u_k.has_value());
    CHECK(profile.collapse_flags.empty());
    CHECK_FALSE(profile.igs.has_value());
}

TEST_CASE("higher-order model: u decreases from short to long windows") {
    const auto tokens = alice_tokens();
    NGramBackend backend(std::make_shared<const NGramModel>(NGramModel::train(tokens, 6, 0.01, Tokenizer::bytes())));
    const auto profile = run_profile(backend, tokens, small_config({3, 90}, 200), "alice");
    CHECK(*profile.record_at(3)->u_k > *profile.record_at(90)->u_k);
}

TEST_CASE("Jensen holds on every record") {
    const auto tokens = alice_tokens();
    NGramBackend backend(std::make_shared<const NGramModel>(NGramModel::train(tokens, 5, 0.1, Tokenizer::bytes())));
    const auto profile = run_profile(backend, tokens, small_config({3, 9, 30, 90}, 150), "alice");
    for (const auto& r : profile.records) {
        CHECK(r.H_k - r.h_k >= -1e-9);
        CHECK(*r.u_k >= 0.0);
        CHECK(*r.u_k <= 1.0);
    }
}

TEST_CASE("results do not depend on the worker count") {
    const auto tokens = alice_tokens();
    NGramBackend backend(std::make_shared<const NGramModel>(NGramModel::train(tokens, 3, 0.01, Tokenizer::bytes())));
    const auto config = small_config({3, 30, 300}, 301);
    const auto one = run_profile(backend, tokens, config, "alice", {1});
    for (std::size_t jobs : {2u, 3u, 8u}) {
        const auto many = run_profile(backend, tokens, config, "alice", {jobs});
        for (std::size_t i = 0; i < one.records.size(); ++i) {
            CHECK(std::abs(one.records[i].h_k - many.records[i].h_k) <= 1e-12);
            CHECK(std::abs(one.records[i].H_k - many.records[i].H_k) <= 1e-12);
        }
    }
}

TEST_CASE("a failing grid entry keeps the completed records") {
    FailingBackend backend(20);
    const auto tokens = alice_tokens();
    try {
        run_profile(backend, tokens, small_config({3, 9, 30, 90}, 20), "alice");
        FAIL("expected ProfileError");
    } catch (const ProfileError& e) {
        CHECK(e.code() == Errc::BackendError);
        CHECK(std::string(e.what()).find("k=30") != std::string::npos);
        const auto& p = e.partial();
        REQUIRE(p.records.size() == 2);
        CHECK(p.records[1].k == 9);
        REQUIRE(p.failures.size() == 1);
        CHECK(p.failures[0].k == 30);
        CHECK_FALSE(p.igs.has_value());
    }
}

TEST_CASE("configuration and input validation") {
    UniformBackend u(256);
    const auto tokens = alice_tokens();
    auto bad = small_config({9, 3}, 10);
    CHECK(code_of([&] { run_profile(u, tokens, bad, "x"); }) == Errc::ConfigError);
    bad = small_config({3, 9}, 0);
    CHECK(code_of([&] { run_profile(u, tokens, bad, "x"); }) == Errc::ConfigError);
    bad = small_config({3, 9}, 10);
    bad.collapse_threshold = 1.5;
    CHECK(code_of([&] { run_profile(u, tokens, bad, "x"); }) == Errc::ConfigError);
    bad = small_config({3, 9}, 10);
    bad.igs_k_small = 9;
    CHECK(code_of([&] { run_profile(u, tokens, bad, "x"); }) == Errc::ConfigError);

    const auto big = small_config({3, 600}, tokens.size());
    CHECK(code_of([&] { run_profile(u, tokens, big, "x"); }) == Errc::InsufficientTokens);

    LimitedBackend limited;
    CHECK(code_of([&] { run_profile(limited, tokens, small_config({3, 90}, 10), "x"); }) == Errc::ContextTooLong);

    UniformBackend tiny(16);
    CHECK(code_of([&] { run_profile(tiny, tokens, small_config({3, 9}, 10), "x"); }) == Errc::BackendError);
}

TEST_CASE("collapse detection and IGS helpers") {
    std::vector<EntropyRecord> records{
        {3, 10, 1.0, 1.0, 0.9}, {90, 10, 0.0, 1.0, 0.04}, {300, 10, 0.0, 0.0, std::nullopt}, {600, 10, 0.0, 1.0, 0.01}};
    const auto flags = detect_collapse(records, 0.05, 90);
    REQUIRE(flags.size() == 2);
    CHECK(flags[0] == CollapseFlag{90, 0.04});
    CHECK(flags[1].k == 600);
    CHECK(detect_collapse(records, 0.05, 91).size() == 1);
    CHECK(std::abs(*profile_igs(records, 3, 600) - 0.9 * 0.99) <= 1e-15);
    CHECK_FALSE(profile_igs(records, 3, 300).has_value());
    CHECK_FALSE(profile_igs(records, 3, 30).has_value());
}
