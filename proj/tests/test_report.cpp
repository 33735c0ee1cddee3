#include <doctest.h>

#include "edc/error.hpp"
#include "edc/report.hpp"
#include "support/published_edc.hpp"

#include <regex>

using namespace edc;

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

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

/// A profile whose records carry the published numbers for one row.
CognitiveProfile published(std::string_view model, std::string_view corpus) {
    const auto& row = fixtures::row(model, corpus);
    CognitiveProfile p;
    p.backend = {std::string(row.model), 128256, BackendKind::Remote, "published", 0, OutputKind::Logits};
    p.corpus_id = std::string(row.corpus);
    p.config.k_grid.assign(fixtures::kGrid.begin(), fixtures::kGrid.end());
    for (std::size_t i = 0; i < fixtures::kGrid.size(); ++i) {
        p.records.push_back({fixtures::kGrid[i], 1000, row.h[i], row.H[i], row.u[i]});
    }
    p.igs = profile_igs(p.records, 3, 600);
    p.collapse_flags = detect_collapse(p, 0.05, 90);
    return p;
}

CognitiveProfile synthetic(std::string name, std::vector<std::pair<std::size_t, std::optional<double>>> us) {
    CognitiveProfile p;
    p.backend = {std::move(name), 256, BackendKind::Uniform, "bytes", 0, OutputKind::Logits};
    p.corpus_id = "toy";
    p.config.k_grid.clear();
    for (const auto& [k, u] : us) {
        p.config.k_grid.push_back(k);
        p.records.push_back({k, 10, u ? *u : 0.0, u ? 1.0 : 0.0, u});
    }
    p.config.igs_k_small = p.config.k_grid.front();
    p.config.igs_k_large = p.config.k_grid.back();
    p.config.collapse_k_min = p.config.k_grid.back();
    p.igs = profile_igs(p.records, p.config.igs_k_small, p.config.igs_k_large);
    return p;
}

} // namespace

TEST_CASE("fixed4 formatting follows the exact binary value with ties to even") {
    CHECK(format_fixed4(0.03125) == "0.0312");
    CHECK(format_fixed4(0.09375) == "0.0938");
    CHECK(format_fixed4(0.8273) == "0.8273");
    CHECK(format_fixed4(1.0) == "1.0000");
    CHECK(format_fixed4(-0.0) == "0.0000");
    CHECK(format_fixed4(-0.00001) == "0.0000");
    CHECK(format_fixed4(13.55144) == "13.5514");
    CHECK(display_value(std::nullopt) == "undef");
}

TEST_CASE("published row renders to its printed values") {
    const std::vector<CognitiveProfile> ps{published("Llama", "ulysses")};
    const auto csv = to_table(ps, TableFormat::Csv);
    CHECK(csv.rfind("model,corpus,metric,3,9,30,90,300,600\n", 0) == 0);
    CHECK(csv.find("Llama 3.3 70.6B,ulysses,u_k,0.8273,0.5164,0.2182,0.0605,0.0316,0.0265\n") != std::string::npos);
    CHECK(csv.find("Llama 3.3 70.6B,ulysses,h_k,11.2112,5.4613,1.9958,0.5029,0.2583,0.2160\n") !=
          std::string::npos);
    CHECK(csv.find("Llama 3.3 70.6B,ulysses,H_k,13.5514,10.5765,9.1482,8.3146,8.1838,8.1527\n") !=
          std::string::npos);
    CHECK(csv.find('\r') == std::string::npos);
}

TEST_CASE("every published row renders its u values") {
    for (const auto& row : fixtures::kRows) {
        const std::vector<CognitiveProfile> ps{published(row.model, row.corpus)};
        const auto csv = to_table(ps, TableFormat::Csv);
        std::string expected = std::string(row.model) + "," + std::string(row.corpus) + ",u_k";
        for (double u : row.u) expected += "," + format_fixed4(u);
        CHECK(csv.find(expected + "\n") != std::string::npos);
    }
}

TEST_CASE("empty and mismatched tables") {
    CHECK(to_table({}, TableFormat::Csv) == "model,corpus,metric\n");
    const auto empty_json = nlohmann::json::parse(to_table({}, TableFormat::Json));
    CHECK(empty_json["rows"].empty());

    const std::vector<CognitiveProfile> mixed{synthetic("a", {{3, 0.5}, {9, 0.4}}),
                                              synthetic("b", {{3, 0.5}, {30, 0.4}})};
    CHECK(code_of([&] { to_table(mixed, TableFormat::Csv); }) == Errc::GridMismatch);
    CHECK(code_of([&] { to_table(mixed, TableFormat::Json); }) == Errc::GridMismatch);
}

TEST_CASE("Undefined values are marked, never zero") {
    const std::vector<CognitiveProfile> ps{synthetic("m", {{3, 0.5}, {9, std::nullopt}, {30, 0.25}})};
    const auto csv = to_table(ps, TableFormat::Csv);
    CHECK(csv.find("m,toy,u_k,0.5000,undef,0.2500\n") != std::string::npos);
    const auto j = nlohmann::json::parse(to_table(ps, TableFormat::Json));
    const auto& u_row = j["rows"][2];
    CHECK(u_row["metric"] == "u_k");
    CHECK(u_row["values"][1].is_null());
    CHECK(u_row["display"][1] == "undef");
    CHECK(u_row["values"][0] == 0.5);
    CHECK(j["format_version"] == kReportFormatVersion);
}

TEST_CASE("IGS table and footnote") {
    const std::vector<CognitiveProfile> ps{
        synthetic("ideal", {{3, 1.0}, {600, 0.0}}),
        published("Llama", "alice"),
        synthetic("flat", {{3, std::nullopt}, {600, 0.2}}),
    };
    const auto t = to_igs_table(ps);
    CHECK(t.rfind("model,toy,alice\n", 0) == 0);
    CHECK(t.find("ideal,1.0000,\n") != std::string::npos);
    CHECK(t.find("Llama 3.3 70.6B,,0.8539\n") != std::string::npos);
    CHECK(t.find("flat,undef,\n") != std::string::npos);
    CHECK(t.find("# note: IGS = u(3) * (1 - u(600))") != std::string::npos);
    CHECK(t.back() == '\n');
}

TEST_CASE("figure: one polyline and a marker per point") {
    const std::vector<CognitiveProfile> ps{synthetic("m", {{3, 0.9}, {30, 0.5}, {300, 0.1}})};
    const auto svg = render_edc(plot_spec(ps));
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\"") != std::string::npos);
    CHECK(count(svg, "<polyline") == 1);
    CHECK(count(svg, "<circle") == 3);
    CHECK(count(svg, "class=\"legend-entry\"") == 1);
    CHECK(svg.find("m / toy") != std::string::npos);
    CHECK(svg.find("<!-- warning") == std::string::npos);
    CHECK(render_edc(plot_spec(ps)) == svg);

    // x positions are log-spaced: equal gaps for 3, 30, 300
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex(R"(points="([\d.]+),[\d.]+ ([\d.]+),[\d.]+ ([\d.]+),)")));
    const double a = std::stod(m[1]), b = std::stod(m[2]), c = std::stod(m[3]);
    CHECK(std::abs((b - a) - (c - b)) <= 0.02);
}

TEST_CASE("figure: an Undefined point splits the line and leaves a warning") {
    const std::vector<CognitiveProfile> ps{
        synthetic("gap", {{3, 0.9}, {9, 0.7}, {30, std::nullopt}, {90, 0.2}, {300, 0.1}}),
        synthetic("other <&>", {{3, 0.5}, {9, 0.5}, {30, 0.5}, {90, 0.5}, {300, 0.5}})};
    const auto svg = render_edc(plot_spec(ps, "A & B"));
    CHECK(count(svg, "<polyline") == 3);
    CHECK(count(svg, "<circle") == 9);
    CHECK(svg.find("<!-- warning: gap / toy has undefined u_k at k=30; point omitted -->") != std::string::npos);
    CHECK(count(svg, "class=\"legend-entry\"") == 2);
    CHECK(svg.find("other &lt;&amp;&gt; / toy") != std::string::npos);
    CHECK(svg.find("<title>A &amp; B</title>") != std::string::npos);
}

TEST_CASE("figure errors") {
    CHECK(code_of([] { render_edc(PlotSpec{}); }) == Errc::EmptySeries);
    PlotSpec spec;
    spec.series.push_back({"empty", {}});
    CHECK(code_of([&] { render_edc(spec); }) == Errc::EmptySeries);
    spec.series[0].points.emplace_back(0, 0.5);
    CHECK(code_of([&] { render_edc(spec); }) == Errc::OutOfRange);
}

TEST_CASE("profile JSON round-trips exactly") {
    auto p = published("Qwen", "kant");
    p.failures.push_back({600, "server went away"});
    p.records.back().u_k.reset();
    const std::vector<CognitiveProfile> ps{p};
    const auto doc = profiles_document(ps, "abc123");
    const auto back = parse_profiles_document(doc);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == p);
    CHECK(nlohmann::json::parse(doc)["manifest_sha256"] == "abc123");

    CHECK(code_of([] { parse_profiles_document("not json"); }) == Errc::ConfigError);
    CHECK(code_of([] { parse_profiles_document(R"({"format_version": 99, "profiles": []})"); }) ==
          Errc::ConfigError);
    CHECK(code_of([] { parse_profiles_document(R"({"format_version": 1})"); }) == Errc::ConfigError);
    CHECK(code_of([] { profile_from_json(nlohmann::json{{"backend", 3}}); }) == Errc::ConfigError);
}

TEST_CASE("audit report lists collapse points") {
    const auto p = published("Llama", "alice");
    const auto audit = audit_report(p, "feed");
    CHECK(audit.find("status: COLLAPSE DETECTED at 3 grid points") != std::string::npos);
    CHECK(audit.find("  k=90 u_k=0.0220\n") != std::string::npos);
    CHECK(audit.find("manifest_sha256: feed\n") != std::string::npos);

    const auto calm = audit_report(published("DeepSeek", "alice"));
    CHECK(calm.find("status: no collapse detected") != std::string::npos);
}
