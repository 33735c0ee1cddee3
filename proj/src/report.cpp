#include "edc/report.hpp"

#include "edc/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

namespace edc {

namespace {

constexpr const char* kModule = "report";

std::string fixed(double v, int precision) {
    if (v == 0.0) v = 0.0; // drop the sign of -0
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, precision);
    if (ec != std::errc()) fail(Errc::OutOfRange, kModule, "value too large to render");
    std::string out(buf.data(), end);
    if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

// "--" is not allowed inside XML comments
std::string comment_safe(std::string s) {
    for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--", p)) s.replace(p, 2, "- ");
    return s;
}

const std::vector<std::size_t>& common_grid(std::span<const CognitiveProfile> profiles) {
    const auto& grid = profiles.front().config.k_grid;
    for (const auto& p : profiles) {
        if (p.config.k_grid != grid) {
            fail(Errc::GridMismatch, kModule,
                 "profile '" + p.backend.name + " / " + p.corpus_id + "' uses a different k grid");
        }
    }
    return grid;
}

struct MetricRow {
    const char* name;
    std::vector<std::optional<double>> values;
};

std::vector<MetricRow> metric_rows(const CognitiveProfile& p, const std::vector<std::size_t>& grid) {
    MetricRow h{"h_k", {}}, H{"H_k", {}}, u{"u_k", {}};
    for (std::size_t k : grid) {
        const EntropyRecord* r = p.record_at(k);
        h.values.push_back(r ? std::optional<double>(r->h_k) : std::nullopt);
        H.values.push_back(r ? std::optional<double>(r->H_k) : std::nullopt);
        u.values.push_back(r ? r->u_k : std::nullopt);
    }
    return {h, H, u};
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

} // namespace

std::string format_fixed4(double value) { return fixed(value, 4); }

std::string display_value(const std::optional<double>& value) {
    return value ? format_fixed4(*value) : "undef";
}

std::string to_table(std::span<const CognitiveProfile> profiles, TableFormat format) {
    if (format == TableFormat::Csv) {
        std::string out = "model,corpus,metric";
        if (profiles.empty()) return out + "\n";
        const auto& grid = common_grid(profiles);
        for (std::size_t k : grid) out += "," + std::to_string(k);
        out += "\n";
        for (const auto& p : profiles) {
            for (const auto& row : metric_rows(p, grid)) {
                out += csv_field(p.backend.name) + "," + csv_field(p.corpus_id) + "," + row.name;
                for (const auto& v : row.values) out += "," + display_value(v);
                out += "\n";
            }
        }
        return out;
    }

    nlohmann::json doc = {{"format_version", kReportFormatVersion}};
    doc["k_grid"] = profiles.empty() ? std::vector<std::size_t>{} : common_grid(profiles);
    doc["rows"] = nlohmann::json::array();
    for (const auto& p : profiles) {
        for (const auto& row : metric_rows(p, doc["k_grid"].get<std::vector<std::size_t>>())) {
            nlohmann::json values = nlohmann::json::array();
            nlohmann::json display = nlohmann::json::array();
            for (const auto& v : row.values) {
                values.push_back(optional_json(v));
                display.push_back(display_value(v));
            }
            doc["rows"].push_back({{"model", p.backend.name},
                                   {"corpus", p.corpus_id},
                                   {"metric", row.name},
                                   {"values", std::move(values)},
                                   {"display", std::move(display)}});
        }
    }
    return doc.dump(2) + "\n";
}

std::string to_igs_table(std::span<const CognitiveProfile> profiles) {
    std::vector<std::string> models;
    std::vector<std::string> corpora;
    auto remember = [](std::vector<std::string>& list, const std::string& v) {
        if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
    };
    for (const auto& p : profiles) {
        remember(models, p.backend.name);
        remember(corpora, p.corpus_id);
    }

    std::string out = "model";
    for (const auto& c : corpora) out += "," + csv_field(c);
    out += "\n";
    for (const auto& m : models) {
        out += csv_field(m);
        for (const auto& c : corpora) {
            auto it = std::find_if(profiles.begin(), profiles.end(),
                                   [&](const auto& p) { return p.backend.name == m && p.corpus_id == c; });
            out += ",";
            if (it != profiles.end()) out += display_value(it->igs);
        }
        out += "\n";
    }

    std::string pair = "u(k_small) * (1 - u(k_large))";
    if (!profiles.empty()) {
        pair = "u(" + std::to_string(profiles.front().config.igs_k_small) + ") * (1 - u(" +
               std::to_string(profiles.front().config.igs_k_large) + "))";
    }
    out += "# note: IGS = " + pair +
           " computed from each profile's own u_k values; published IGS figures that do not "
           "satisfy this formula are not reproduced here\n";
    return out;
}

PlotSpec plot_spec(std::span<const CognitiveProfile> profiles, std::string title) {
    PlotSpec spec;
    spec.title = std::move(title);
    for (const auto& p : profiles) {
        PlotSeries s;
        s.label = p.backend.name + " / " + p.corpus_id;
        for (std::size_t k : p.config.k_grid) {
            const EntropyRecord* r = p.record_at(k);
            s.points.emplace_back(k, r ? r->u_k : std::nullopt);
        }
        spec.series.push_back(std::move(s));
    }
    return spec;
}

std::string render_edc(const PlotSpec& spec) {
    if (spec.series.empty()) fail(Errc::EmptySeries, kModule, "plot has no series");
    std::size_t k_min = SIZE_MAX;
    std::size_t k_max = 0;
    for (const auto& s : spec.series) {
        if (s.points.empty()) fail(Errc::EmptySeries, kModule, "series '" + s.label + "' has no points");
        for (const auto& [k, u] : s.points) {
            if (k == 0) fail(Errc::OutOfRange, kModule, "k must be positive on a log axis");
            k_min = std::min(k_min, k);
            k_max = std::max(k_max, k);
        }
    }

    constexpr double kWidth = 720, kHeight = 450;
    constexpr double kLeft = 70, kRight = 220, kTop = 50, kBottom = 60;
    constexpr double kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;
    static constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                            "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

    int lo = static_cast<int>(std::floor(std::log10(static_cast<double>(k_min))));
    int hi = static_cast<int>(std::ceil(std::log10(static_cast<double>(k_max))));
    if (hi <= lo) hi = lo + 1;
    auto x_of = [&](double k) { return kLeft + (std::log10(k) - lo) / (hi - lo) * kPlotW; };
    auto y_of = [&](double u) { return kTop + (1.0 - u) * kPlotH; };
    auto f2 = [](double v) { return fixed(v, 2); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << f2(kWidth)
        << "\" height=\"" << f2(kHeight) << "\" viewBox=\"0 0 " << f2(kWidth) << " " << f2(kHeight) << "\">\n"
        << "<title>" << xml_escape(spec.title) << "</title>\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << f2(kWidth) << "\" height=\"" << f2(kHeight)
        << "\" fill=\"#ffffff\"/>\n"
        << "<text x=\"" << f2(kLeft + kPlotW / 2) << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">"
        << xml_escape(spec.title) << "</text>\n";

    svg << "<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\" fill=\"none\">\n"
        << "<line x1=\"" << f2(kLeft) << "\" y1=\"" << f2(kTop + kPlotH) << "\" x2=\"" << f2(kLeft + kPlotW)
        << "\" y2=\"" << f2(kTop + kPlotH) << "\"/>\n"
        << "<line x1=\"" << f2(kLeft) << "\" y1=\"" << f2(kTop) << "\" x2=\"" << f2(kLeft) << "\" y2=\""
        << f2(kTop + kPlotH) << "\"/>\n"
        << "</g>\n";

    svg << "<g class=\"x-ticks\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">\n";
    for (int d = lo; d <= hi; ++d) {
        const double x = x_of(std::pow(10.0, d));
        std::string label = "1";
        for (int z = 0; z < d; ++z) label += "0";
        if (d < 0) label = "1e" + std::to_string(d);
        svg << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(kTop + kPlotH) << "\" x2=\"" << f2(x) << "\" y2=\""
            << f2(kTop + kPlotH + 6) << "\" stroke=\"#000000\"/>\n"
            << "<text x=\"" << f2(x) << "\" y=\"" << f2(kTop + kPlotH + 20) << "\">" << label << "</text>\n";
    }
    svg << "</g>\n";

    svg << "<g class=\"y-ticks\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">\n";
    for (int t = 0; t <= 5; ++t) {
        const double u = t / 5.0;
        const double y = y_of(u);
        svg << "<line x1=\"" << f2(kLeft - 6) << "\" y1=\"" << f2(y) << "\" x2=\"" << f2(kLeft) << "\" y2=\""
            << f2(y) << "\" stroke=\"#000000\"/>\n"
            << "<text x=\"" << f2(kLeft - 10) << "\" y=\"" << f2(y + 4) << "\">" << fixed(u, 1) << "</text>\n";
    }
    svg << "</g>\n";

    svg << "<text x=\"" << f2(kLeft + kPlotW / 2) << "\" y=\"" << f2(kHeight - 15)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(spec.x_label)
        << "</text>\n"
        << "<text x=\"18\" y=\"" << f2(kTop + kPlotH / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\" transform=\"rotate(-90 18 "
        << f2(kTop + kPlotH / 2) << ")\">" << xml_escape(spec.y_label) << "</text>\n";

    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const auto& s = spec.series[si];
        const char* color = kPalette[si % kPalette.size()];
        svg << "<g class=\"series\" id=\"series-" << si << "\">\n";

        std::vector<std::vector<std::pair<double, double>>> runs(1);
        for (const auto& [k, u] : s.points) {
            if (!u) {
                svg << "<!-- warning: " << comment_safe(xml_escape(s.label)) << " has undefined u_k at k=" << k
                    << "; point omitted -->\n";
                if (!runs.back().empty()) runs.emplace_back();
                continue;
            }
            runs.back().emplace_back(x_of(static_cast<double>(k)), y_of(std::clamp(*u, 0.0, 1.0)));
        }
        for (const auto& run : runs) {
            if (run.empty()) continue;
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t i = 0; i < run.size(); ++i) {
                svg << (i ? " " : "") << f2(run[i].first) << "," << f2(run[i].second);
            }
            svg << "\"/>\n";
        }
        for (const auto& run : runs) {
            for (const auto& [x, y] : run) {
                svg << "<circle cx=\"" << f2(x) << "\" cy=\"" << f2(y) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
            }
        }
        svg << "</g>\n";
    }

    svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const double y = kTop + 10 + 20.0 * static_cast<double>(si);
        const double x = kLeft + kPlotW + 20;
        svg << "<g class=\"legend-entry\">"
            << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(y) << "\" x2=\"" << f2(x + 24) << "\" y2=\"" << f2(y)
            << "\" stroke=\"" << kPalette[si % kPalette.size()] << "\" stroke-width=\"2\"/>"
            << "<text x=\"" << f2(x + 30) << "\" y=\"" << f2(y + 4) << "\">" << xml_escape(spec.series[si].label)
            << "</text></g>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

nlohmann::json profile_to_json(const CognitiveProfile& p) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : p.records) {
        records.push_back({{"k", r.k},
                           {"n", r.n},
                           {"h_k", r.h_k},
                           {"H_k", r.H_k},
                           {"u_k", optional_json(r.u_k)},
                           {"display",
                            {{"h_k", format_fixed4(r.h_k)},
                             {"H_k", format_fixed4(r.H_k)},
                             {"u_k", display_value(r.u_k)}}}});
    }
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& f : p.collapse_flags) flags.push_back({{"k", f.k}, {"u_k", f.u_k}});
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : p.failures) failures.push_back({{"k", f.k}, {"message", f.message}});

    const auto& c = p.config;
    return {
        {"backend", to_json(p.backend)},
        {"corpus_id", p.corpus_id},
        {"config",
         {{"k_grid", c.k_grid},
          {"n_windows", c.n_windows},
          {"alignment", std::string(to_string(c.alignment))},
          {"collapse_threshold", c.collapse_threshold},
          {"collapse_k_min", c.collapse_k_min},
          {"igs_k_small", c.igs_k_small},
          {"igs_k_large", c.igs_k_large}}},
        {"records", std::move(records)},
        {"igs", optional_json(p.igs)},
        {"igs_display", display_value(p.igs)},
        {"collapse_flags", std::move(flags)},
        {"failures", std::move(failures)},
    };
}

CognitiveProfile profile_from_json(const nlohmann::json& j) {
    try {
        CognitiveProfile p;
        p.backend = descriptor_from_json(j.at("backend"));
        p.corpus_id = j.at("corpus_id").get<std::string>();
        const auto& c = j.at("config");
        p.config.k_grid = c.at("k_grid").get<std::vector<std::size_t>>();
        p.config.n_windows = c.at("n_windows").get<std::size_t>();
        p.config.alignment = alignment_from_string(c.at("alignment").get<std::string>());
        p.config.collapse_threshold = c.at("collapse_threshold").get<double>();
        p.config.collapse_k_min = c.at("collapse_k_min").get<std::size_t>();
        p.config.igs_k_small = c.at("igs_k_small").get<std::size_t>();
        p.config.igs_k_large = c.at("igs_k_large").get<std::size_t>();
        for (const auto& r : j.at("records")) {
            p.records.push_back({r.at("k").get<std::size_t>(), r.at("n").get<std::size_t>(),
                                 r.at("h_k").get<double>(), r.at("H_k").get<double>(),
                                 optional_from_json(r.at("u_k"))});
        }
        p.igs = optional_from_json(j.at("igs"));
        for (const auto& f : j.at("collapse_flags")) {
            p.collapse_flags.push_back({f.at("k").get<std::size_t>(), f.at("u_k").get<double>()});
        }
        for (const auto& f : j.value("failures", nlohmann::json::array())) {
            p.failures.push_back({f.at("k").get<std::size_t>(), f.at("message").get<std::string>()});
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, kModule, std::string("malformed profile JSON: ") + e.what());
    }
}

std::string profiles_document(std::span<const CognitiveProfile> profiles, const std::string& manifest_sha256) {
    nlohmann::json doc = {{"format_version", kReportFormatVersion}};
    if (!manifest_sha256.empty()) doc["manifest_sha256"] = manifest_sha256;
    doc["profiles"] = nlohmann::json::array();
    for (const auto& p : profiles) doc["profiles"].push_back(profile_to_json(p));
    return doc.dump(2) + "\n";
}

std::vector<CognitiveProfile> parse_profiles_document(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, kModule, std::string("cannot parse profile document: ") + e.what());
    }
    if (doc.value("format_version", 0) != kReportFormatVersion) {
        fail(Errc::ConfigError, kModule, "unsupported profile document format_version");
    }
    if (!doc.contains("profiles") || !doc["profiles"].is_array()) {
        fail(Errc::ConfigError, kModule, "profile document has no profiles array");
    }
    std::vector<CognitiveProfile> out;
    for (const auto& p : doc["profiles"]) out.push_back(profile_from_json(p));
    return out;
}

std::string audit_report(const CognitiveProfile& p, const std::string& manifest_sha256) {
    std::ostringstream out;
    out << "backend: " << p.backend.name << "\n"
        << "corpus: " << p.corpus_id << "\n"
        << "collapse_threshold: " << fixed(p.config.collapse_threshold, 4) << "\n"
        << "collapse_k_min: " << p.config.collapse_k_min << "\n";
    if (p.collapse_flags.empty()) {
        out << "status: no collapse detected\n";
    } else {
        out << "status: COLLAPSE DETECTED at " << p.collapse_flags.size() << " grid point"
            << (p.collapse_flags.size() == 1 ? "" : "s") << "\n";
        for (const auto& f : p.collapse_flags) out << "  k=" << f.k << " u_k=" << format_fixed4(f.u_k) << "\n";
    }
    for (const auto& f : p.failures) out << "failure: k=" << f.k << ": " << f.message << "\n";
    if (!manifest_sha256.empty()) out << "manifest_sha256: " << manifest_sha256 << "\n";
    return out.str();
}

} // namespace edc
