#pragma once

#include "edc/backend.hpp"
#include "edc/corpus.hpp"
#include "edc/error.hpp"
#include "edc/profiler.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace edc {

// Run manifest (JSON):
//
//   {
//     "corpus":  {"path", "start_marker", "token_budget", "corpus_id"} or {"manifest": PATH, ...},
//     "backend": {"kind", "model", "address", "vocab_size", "delta_rule", "delta_target", "name"},
//     "profile": {"k_grid", "n", "alignment", "collapse_threshold", "collapse_k_min",
//                 "igs_k_small", "igs_k_large"},
//     "out": DIR, "jobs": N
//   }
//
// Unset profile fields take the defaults; igs_k_small, igs_k_large and
// collapse_k_min default from the grid (first k, last k, min(90, max k)).

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitCollapse = 3;

struct BackendSpec {
    BackendKind kind = BackendKind::NGram;
    /// n-gram model file, or replay session file.
    std::filesystem::path model;
    /// "HOST:PORT" or "stdio:COMMAND".
    std::string address;
    /// Uniform and delta backends only.
    std::size_t vocab_size = 256;
    /// "echo_last" or "constant".
    std::string delta_rule = "echo_last";
    TokenId delta_target = 0;
    /// Display name; empty keeps the backend's own.
    std::string name;
};

struct RunManifest {
    CorpusSpec corpus;
    BackendSpec backend;
    ProfileConfig profile;
    std::filesystem::path out;
    std::size_t jobs = 1;
};

/// Reads a manifest file, resolving relative paths against its directory.
nlohmann::json load_manifest_json(const std::filesystem::path& path);

/// Merges overlay into base key by key (objects recursively).
void merge_json(nlohmann::json& base, const nlohmann::json& overlay);

/// Throws ConfigError. A replay backend contributes the recorded profile
/// settings underneath the ones given here.
RunManifest manifest_from_json(const nlohmann::json& j);

/// The canonical {corpus, backend, profile} document the manifest hash covers.
nlohmann::json provenance_json(const RunManifest& m);
std::string manifest_sha256(const RunManifest& m);

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

struct ProfileRun {
    CognitiveProfile profile;
    std::string manifest_sha256;
};

/// Ingests the corpus, builds the backend and profiles it. Replay sessions
/// supply their own tokens and report the recorded manifest hash.
/// Throws ProfileError for a failed grid entry, GridMismatch when a replay
/// session does not cover the request.
ProfileRun profile_manifest(const RunManifest& m);

/// Evaluates every window the manifest's grid needs and writes a replay
/// session to path. Returns the number of distinct windows recorded.
std::size_t record_manifest(const RunManifest& m, const std::filesystem::path& path);

struct Artifact {
    std::string name;
    std::string contents;
};

/// profile.json, tables.csv, tables.json, edc.svg, igs.csv and audit.txt.
std::vector<Artifact> profile_artifacts(const CognitiveProfile& profile, const std::string& manifest_sha256);

/// Multi-profile tables and figure: tables.csv, tables.json, edc.svg, igs.csv.
std::vector<Artifact> report_artifacts(std::span<const CognitiveProfile> profiles);

/// Stages every artifact under a temporary name, then renames them all.
/// Nothing is left behind when a write fails.
void write_artifacts(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts);

int exit_code_for(const Error& e);

} // namespace edc
