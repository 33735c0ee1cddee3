#pragma once

#include "edc/profiler.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace edc {

inline constexpr int kReportFormatVersion = 1;

enum class TableFormat { Csv, Json };

/// Fixed 4-decimal rendering of the exact binary value, ties to even.
std::string format_fixed4(double value);

/// "undef" for Undefined, otherwise format_fixed4.
std::string display_value(const std::optional<double>& value);

/// One h_k, H_k and u_k row per profile, one column per grid k.
/// CSV: header "model,corpus,metric,<k>...", LF line endings; Undefined cells
/// read "undef". JSON: full-precision values (null for Undefined) plus the
/// display strings. Throws GridMismatch when profiles disagree on the grid.
std::string to_table(std::span<const CognitiveProfile> profiles, TableFormat format);

/// Model x corpus matrix of IGS values, followed by a "# " footnote line
/// stating how the values were computed.
std::string to_igs_table(std::span<const CognitiveProfile> profiles);

struct PlotSeries {
    std::string label;
    /// (k, u_k); an Undefined u_k leaves a gap.
    std::vector<std::pair<std::size_t, std::optional<double>>> points;
};

struct PlotSpec {
    std::vector<PlotSeries> series;
    std::string title = "Entropy Decay Curve";
    std::string x_label = "context length k (log scale)";
    std::string y_label = "u_k = h_k / H_k";
};

/// One series per profile, labelled "<model> / <corpus>".
PlotSpec plot_spec(std::span<const CognitiveProfile> profiles, std::string title = "Entropy Decay Curve");

/// Standalone SVG 1.1: log10 x axis with decade ticks, y in [0, 1], one
/// polyline per run of defined points plus a circle marker per point, and a
/// legend entry per series. Byte-deterministic. Throws EmptySeries.
std::string render_edc(const PlotSpec& spec);

nlohmann::json profile_to_json(const CognitiveProfile& profile);
CognitiveProfile profile_from_json(const nlohmann::json& j);

/// {"format_version": 1, "manifest_sha256": ..., "profiles": [...]}
std::string profiles_document(std::span<const CognitiveProfile> profiles,
                              const std::string& manifest_sha256 = {});
std::vector<CognitiveProfile> parse_profiles_document(std::string_view text);

/// Plain-text collapse audit.
std::string audit_report(const CognitiveProfile& profile, const std::string& manifest_sha256 = {});

} // namespace edc
