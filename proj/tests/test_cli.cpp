#include <doctest.h>

#include "edc/corpus.hpp"
#include "edc/ngram.hpp"
#include "edc/report.hpp"
#include "oracles/brute_force.hpp"
#include "support/helpers.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace testing_support;

namespace {

const std::string kCli = EDC_CLI_PATH;
const std::string kStub = EDC_STUB_PATH;

std::string cli(const std::string& args) { return quote(kCli) + " " + args; }

std::string train(const TempDir& dir, const std::string& name, const std::string& extra = "") {
    const auto model = dir / name;
    const auto r = run(cli("-q ngram-train --corpus " + quote(alice_path().string()) + " --marker " +
                           quote(kAliceMarker) + " --out " + quote(model.string()) + " " + extra));
    REQUIRE(r.exit_code == 0);
    return model.string();
}

nlohmann::json profile_doc(const fs::path& out) { return nlohmann::json::parse(slurp(out / "profile.json")); }

} // namespace

TEST_CASE("default profile of the bundled excerpt matches the oracle") {
    TempDir dir;
    const auto model = train(dir, "m3.json");
    const auto out = dir / "run";
    const auto r = run(cli("-q profile --corpus " + quote(alice_path().string()) + " --marker " + quote(kAliceMarker) +
                           " --backend ngram --model " + quote(model) + " --out " + quote(out.string())));
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.rfind("model,corpus,metric,3,9,30,90,300,600\n", 0) == 0);
    for (const char* name : {"profile.json", "tables.csv", "tables.json", "edc.svg", "igs.csv", "audit.txt"}) {
        CHECK(fs::exists(out / name));
    }

    const auto doc = profile_doc(out);
    const std::string sha = doc["manifest_sha256"];
    CHECK(sha.size() == 64);
    CHECK(slurp(out / "tables.csv").find("# manifest_sha256: " + sha) != std::string::npos);
    CHECK(slurp(out / "edc.svg").find("<!-- manifest_sha256: " + sha + " -->") != std::string::npos);

    const auto text = edc::strip_boilerplate(slurp(alice_path()), kAliceMarker).text;
    const auto tokens = byte_tokens(text);
    const auto& p = doc["profiles"][0];
    CHECK(p["config"]["n_windows"] == 1000);
    for (const auto& rec : p["records"]) {
        const std::size_t k = rec["k"];
        const auto o = oracle::ngram_profile(tokens, 3, 0.01, 256, tokens, k, 1000);
        CHECK(std::abs(rec["h_k"].get<double>() - o.h) <= 1e-9);
        CHECK(std::abs(rec["H_k"].get<double>() - o.H) <= 1e-9);
    }
}

TEST_CASE("retraining yields a byte-identical model") {
    TempDir dir;
    CHECK(slurp(train(dir, "a.json")) == slurp(train(dir, "b.json")));
}

TEST_CASE("missing corpus fails without creating the output directory") {
    TempDir dir;
    const auto model = train(dir, "m.json");
    const auto out = dir / "never";
    const auto r = run(cli("profile --corpus " + quote((dir / "absent.txt").string()) + " --model " + quote(model) +
                           " --out " + quote(out.string())),
                       true);
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("corpus_ingest") != std::string::npos);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("an order longer than the training text is refused") {
    TempDir dir;
    spit(dir / "tiny.txt", "abc");
    const auto r = run(cli("ngram-train --corpus " + quote((dir / "tiny.txt").string()) + " --order 10 --out " +
                           quote((dir / "m.json").string())));
    CHECK(r.exit_code != 0);
    CHECK_FALSE(fs::exists(dir / "m.json"));
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run(cli("profile --no-such-flag")).exit_code == 1);
    CHECK(run(cli("")).exit_code == 1);
    TempDir dir;
    const auto model = train(dir, "m.json");
    CHECK(run(cli("profile --corpus " + quote(alice_path().string()) + " --model " + quote(model) +
                  " --k 9,3 --out " + quote((dir / "o").string())))
              .exit_code == 1);
}

TEST_CASE("a collapsing model exits with 3 and says so in the audit") {
    TempDir dir;
    const auto model = train(dir, "w6.json", "--tokenizer words --order 6 --lambda 1e-6");
    const auto out = dir / "run";
    const auto r = run(cli("-q profile --corpus " + quote(alice_path().string()) + " --marker " + quote(kAliceMarker) +
                           " --model " + quote(model) + " --n 500 --out " + quote(out.string())));
    CHECK(r.exit_code == 3);
    const auto audit = slurp(out / "audit.txt");
    CHECK(audit.find("status: COLLAPSE DETECTED at 3 grid points") != std::string::npos);
    const auto p = profile_doc(out)["profiles"][0];
    CHECK(p["collapse_flags"].size() == 3);
    CHECK(p["collapse_flags"][0]["k"] == 90);
}

TEST_CASE("record through a stub server, then replay offline") {
    TempDir dir;
    const auto model = train(dir, "m.json");
    const std::string address = "stdio:" + quote(kStub) + " --model " + quote(model) + " --stdio";
    const std::string common = " --corpus " + quote(alice_path().string()) + " --marker " + quote(kAliceMarker) +
                               " --k 3,9 --n 50 --jobs 1";

    const auto live = run(cli("-q profile --backend remote --address " + quote(address) + common + " --out " +
                              quote((dir / "live").string())));
    REQUIRE(live.exit_code == 0);
    const auto rec = run(cli("-q record --backend remote --address " + quote(address) + common + " --session " +
                             quote((dir / "s.edcr").string())));
    REQUIRE(rec.exit_code == 0);
    const auto replay = run(cli("-q replay --session " + quote((dir / "s.edcr").string()) + " --out " +
                                quote((dir / "replay").string())));
    REQUIRE(replay.exit_code == 0);
    CHECK(slurp(dir / "live" / "profile.json") == slurp(dir / "replay" / "profile.json"));
    CHECK(slurp(dir / "live" / "tables.csv") == slurp(dir / "replay" / "tables.csv"));

    SUBCASE("a grid the session does not cover") {
        const auto r = run(cli("replay --session " + quote((dir / "s.edcr").string()) + " --k 3,30 --out " +
                               quote((dir / "bad").string())));
        CHECK(r.exit_code == 1);
        CHECK_FALSE(fs::exists(dir / "bad"));
    }
    SUBCASE("a truncated session") {
        const auto full = slurp(dir / "s.edcr");
        spit(dir / "t.edcr", full.substr(0, full.size() - 10));
        const auto r = run(cli("replay --session " + quote((dir / "t.edcr").string()) + " --out " +
                               quote((dir / "trunc").string())),
                           true);
        CHECK(r.exit_code == 2);
        CHECK(r.out.find("truncated") != std::string::npos);
        CHECK_FALSE(fs::exists(dir / "trunc"));
    }
}

TEST_CASE("manifest files drive the same run as flags") {
    TempDir dir;
    const auto model = train(dir, "m.json");
    spit(dir / "run.json", nlohmann::json{{"corpus", {{"path", alice_path().string()}, {"start_marker", kAliceMarker}}},
                                          {"backend", {{"kind", "ngram"}, {"model", "m.json"}}},
                                          {"profile", {{"k_grid", {3, 30}}, {"n", 40}}},
                                          {"out", "from-manifest"}}
                                   .dump());
    const auto a = run(cli("-q profile --manifest " + quote((dir / "run.json").string())));
    REQUIRE(a.exit_code == 0);
    const auto b = run(cli("-q profile --corpus " + quote(alice_path().string()) + " --marker " + quote(kAliceMarker) +
                           " --model " + quote(model) + " --k 3,30 --n 40 --out " + quote((dir / "from-flags").string())));
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(dir / "from-manifest" / "profile.json") == slurp(dir / "from-flags" / "profile.json"));
}

TEST_CASE("report combines several profiles") {
    TempDir dir;
    const auto model = train(dir, "m.json");
    const std::string common = " --corpus " + quote(alice_path().string()) + " --marker " + quote(kAliceMarker) +
                               " --k 3,9,30 --n 40";
    REQUIRE(run(cli("-q profile --model " + quote(model) + " --name trigram" + common + " --out " +
                    quote((dir / "a").string())))
                .exit_code == 0);
    REQUIRE(run(cli("-q profile --backend uniform" + common + " --out " + quote((dir / "b").string()))).exit_code == 0);
    const auto r = run(cli("-q report " + quote((dir / "a" / "profile.json").string()) + " " +
                           quote((dir / "b" / "profile.json").string()) + " --out " + quote((dir / "all").string())));
    REQUIRE(r.exit_code == 0);
    const auto csv = slurp(dir / "all" / "tables.csv");
    CHECK(csv.find("trigram,alice_excerpt,u_k,") != std::string::npos);
    CHECK(csv.find("uniform-256,alice_excerpt,u_k,1.0000,1.0000,1.0000\n") != std::string::npos);
    const auto svg = slurp(dir / "all" / "edc.svg");
    std::size_t legends = 0;
    for (auto pos = svg.find("legend-entry"); pos != std::string::npos; pos = svg.find("legend-entry", pos + 1)) ++legends;
    CHECK(legends == 2);
}
