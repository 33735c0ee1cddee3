#include "edc/app.hpp"

#include "edc/io.hpp"
#include "edc/ngram.hpp"
#include "edc/remote.hpp"
#include "edc/replay.hpp"
#include "edc/report.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace edc {

namespace {

constexpr const char* kModule = "cli";

namespace fs = std::filesystem;

[[noreturn]] void config_fail(const std::string& message) { fail(Errc::ConfigError, kModule, message); }

void resolve_path_field(nlohmann::json& obj, const char* key, const fs::path& base) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) return;
    fs::path p = obj[key].get<std::string>();
    if (p.is_relative()) obj[key] = (base / p).lexically_normal().string();
}

nlohmann::json config_to_json(const ProfileConfig& c) {
    return {{"k_grid", c.k_grid},
            {"n", c.n_windows},
            {"alignment", std::string(to_string(c.alignment))},
            {"collapse_threshold", c.collapse_threshold},
            {"collapse_k_min", c.collapse_k_min},
            {"igs_k_small", c.igs_k_small},
            {"igs_k_large", c.igs_k_large}};
}

ProfileConfig config_from_json(const nlohmann::json& p) {
    ProfileConfig c;
    if (p.contains("k_grid")) c.k_grid = p.at("k_grid").get<std::vector<std::size_t>>();
    if (c.k_grid.empty()) config_fail("k grid is empty");
    c.n_windows = p.value("n", c.n_windows);
    if (p.contains("alignment")) c.alignment = alignment_from_string(p.at("alignment").get<std::string>());
    c.collapse_threshold = p.value("collapse_threshold", c.collapse_threshold);
    const std::size_t max_k = *std::max_element(c.k_grid.begin(), c.k_grid.end());
    c.collapse_k_min = p.value("collapse_k_min", std::min<std::size_t>(90, max_k));
    c.igs_k_small = p.value("igs_k_small", c.k_grid.front());
    c.igs_k_large = p.value("igs_k_large", c.k_grid.back());
    c.validate();
    return c;
}

std::string optional_sha(const fs::path& p) {
    std::error_code ec;
    if (p.empty() || !fs::is_regular_file(p, ec)) return {};
    return sha256_hex(read_file(p, kModule));
}

void check_replay_covers(const ProfileConfig& want, const ProfileConfig& have) {
    for (std::size_t k : want.k_grid) {
        if (std::find(have.k_grid.begin(), have.k_grid.end(), k) == have.k_grid.end()) {
            fail(Errc::GridMismatch, kModule, "k=" + std::to_string(k) + " was not recorded in the replay session");
        }
    }
    if (want.n_windows > have.n_windows) {
        fail(Errc::GridMismatch, kModule,
             "requested n=" + std::to_string(want.n_windows) + " but the session recorded n=" +
                 std::to_string(have.n_windows));
    }
    if (want.alignment != have.alignment) {
        fail(Errc::GridMismatch, kModule,
             "requested " + std::string(to_string(want.alignment)) + " alignment but the session used " +
                 std::string(to_string(have.alignment)));
    }
    if (want.alignment == Alignment::End && want.max_k() != have.max_k()) {
        fail(Errc::GridMismatch, kModule, "end-aligned replay needs the recorded max(k)");
    }
}

} // namespace

nlohmann::json load_manifest_json(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path, kModule));
    } catch (const nlohmann::json::exception& e) {
        config_fail("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) config_fail("manifest " + path.string() + " is not a JSON object");
    const fs::path base = path.parent_path();
    if (j.contains("corpus")) {
        resolve_path_field(j["corpus"], "path", base);
        resolve_path_field(j["corpus"], "manifest", base);
    }
    if (j.contains("backend")) resolve_path_field(j["backend"], "model", base);
    resolve_path_field(j, "out", base);
    return j;
}

void merge_json(nlohmann::json& base, const nlohmann::json& overlay) {
    if (!overlay.is_object()) return;
    if (!base.is_object()) base = nlohmann::json::object();
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) {
            merge_json(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        const auto backend = j.value("backend", nlohmann::json::object());
        m.backend.kind = backend_kind_from_string(backend.value("kind", std::string("ngram")));
        m.backend.model = backend.value("model", std::string());
        m.backend.address = backend.value("address", std::string());
        m.backend.vocab_size = backend.value("vocab_size", m.backend.vocab_size);
        m.backend.delta_rule = backend.value("delta_rule", m.backend.delta_rule);
        m.backend.delta_target = backend.value("delta_target", m.backend.delta_target);
        m.backend.name = backend.value("name", std::string());

        switch (m.backend.kind) {
        case BackendKind::NGram:
        case BackendKind::Replay:
            if (m.backend.model.empty()) config_fail("backend '" + std::string(to_string(m.backend.kind)) + "' needs a model file");
            break;
        case BackendKind::Remote:
            if (m.backend.address.empty()) config_fail("remote backend needs an address");
            break;
        case BackendKind::Delta:
            if (m.backend.delta_rule != "echo_last" && m.backend.delta_rule != "constant") {
                config_fail("delta rule must be echo_last or constant");
            }
            [[fallthrough]];
        case BackendKind::Uniform:
            if (m.backend.vocab_size < 2) config_fail("vocab_size must be at least 2");
            break;
        }

        nlohmann::json profile = j.value("profile", nlohmann::json::object());
        if (m.backend.kind == BackendKind::Replay) {
            const ReplayBackend session(m.backend.model);
            nlohmann::json recorded = session.metadata().value("profile", nlohmann::json::object());
            if (profile.contains("k_grid")) {
                for (const char* derived : {"collapse_k_min", "igs_k_small", "igs_k_large"}) recorded.erase(derived);
            }
            merge_json(recorded, profile);
            profile = std::move(recorded);
        }
        m.profile = config_from_json(profile);

        nlohmann::json corpus = j.value("corpus", nlohmann::json::object());
        if (corpus.contains("manifest")) {
            const CorpusSpec base = load_corpus_manifest(corpus.at("manifest").get<std::string>());
            m.corpus = base;
        }
        if (corpus.contains("path")) m.corpus.source = corpus.at("path").get<std::string>();
        if (corpus.contains("start_marker")) m.corpus.start_marker = corpus.at("start_marker").get<std::string>();
        if (corpus.contains("token_budget")) m.corpus.token_budget = corpus.at("token_budget").get<std::size_t>();
        if (corpus.contains("corpus_id")) m.corpus.corpus_id = corpus.at("corpus_id").get<std::string>();
        if (m.corpus.source.empty() && m.backend.kind != BackendKind::Replay) config_fail("no corpus given");
        if (m.corpus.corpus_id.empty() && !m.corpus.source.empty()) m.corpus.corpus_id = m.corpus.source.stem().string();

        m.out = j.value("out", std::string());
        m.jobs = j.value("jobs", std::size_t{1});
        if (m.jobs == 0) m.jobs = 1;
    } catch (const nlohmann::json::exception& e) {
        config_fail(std::string("invalid manifest field: ") + e.what());
    }
    return m;
}

nlohmann::json provenance_json(const RunManifest& m) {
    nlohmann::json corpus = {{"path", m.corpus.source.lexically_normal().generic_string()},
                             {"start_marker", m.corpus.start_marker},
                             {"token_budget", m.corpus.token_budget},
                             {"corpus_id", m.corpus.corpus_id}};
    nlohmann::json backend = {{"kind", std::string(to_string(m.backend.kind))}, {"name", m.backend.name}};
    switch (m.backend.kind) {
    case BackendKind::NGram:
    case BackendKind::Replay:
        backend["model"] = m.backend.model.lexically_normal().generic_string();
        backend["model_sha256"] = optional_sha(m.backend.model);
        break;
    case BackendKind::Remote:
        backend["address"] = m.backend.address;
        break;
    case BackendKind::Delta:
        backend["delta_rule"] = m.backend.delta_rule;
        if (m.backend.delta_rule == "constant") backend["delta_target"] = m.backend.delta_target;
        [[fallthrough]];
    case BackendKind::Uniform:
        backend["vocab_size"] = m.backend.vocab_size;
        break;
    }
    return {{"corpus", std::move(corpus)}, {"backend", std::move(backend)}, {"profile", config_to_json(m.profile)}};
}

std::string manifest_sha256(const RunManifest& m) { return sha256_hex(provenance_json(m).dump()); }

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
    switch (spec.kind) {
    case BackendKind::NGram:
        return std::make_unique<NGramBackend>(std::make_shared<const NGramModel>(NGramModel::load(spec.model)),
                                              spec.name);
    case BackendKind::Replay:
        return std::make_unique<ReplayBackend>(spec.model);
    case BackendKind::Remote:
        return std::make_unique<RemoteBackend>(open_channel(spec.address), spec.name.empty() ? "remote" : spec.name);
    case BackendKind::Uniform:
        return std::make_unique<UniformBackend>(spec.vocab_size);
    case BackendKind::Delta:
        if (spec.delta_rule == "constant") {
            return std::make_unique<DeltaBackend>(DeltaBackend::constant(spec.vocab_size, spec.delta_target));
        }
        return std::make_unique<DeltaBackend>(DeltaBackend::echo_last(spec.vocab_size));
    }
    config_fail("unknown backend kind");
}

ProfileRun profile_manifest(const RunManifest& m) {
    const ProfileOptions options{m.jobs};
    if (m.backend.kind == BackendKind::Replay) {
        const ReplayBackend session(m.backend.model);
        const auto& meta = session.metadata();
        if (!meta.contains("tokens") || !meta.contains("profile")) {
            fail(Errc::ReplayCorrupt, kModule, "replay session lacks the recorded token stream");
        }
        check_replay_covers(m.profile, config_from_json(meta.at("profile")));
        const auto tokens = meta.at("tokens").get<TokenSequence>();
        ProfileRun run;
        run.profile = run_profile(session, tokens, m.profile, meta.value("corpus_id", std::string()), options);
        run.manifest_sha256 = meta.value("manifest_sha256", std::string());
        return run;
    }

    const CleanedCorpus corpus = ingest(m.corpus);
    const auto backend = make_backend(m.backend);
    const std::size_t budget = m.corpus.token_budget ? m.corpus.token_budget : m.profile.required_tokens();
    const TokenSequence tokens = load_tokens(corpus, *backend, budget);
    ProfileRun run;
    run.profile = run_profile(*backend, tokens, m.profile, corpus.corpus_id, options);
    run.manifest_sha256 = manifest_sha256(m);
    return run;
}

std::size_t record_manifest(const RunManifest& m, const fs::path& path) {
    if (m.backend.kind == BackendKind::Replay) config_fail("cannot record from a replay session");
    const CleanedCorpus corpus = ingest(m.corpus);
    const auto backend = make_backend(m.backend);
    const std::size_t budget = m.corpus.token_budget ? m.corpus.token_budget : m.profile.required_tokens();
    const TokenSequence tokens = load_tokens(corpus, *backend, budget);

    std::vector<std::span<const TokenId>> windows;
    std::set<std::span<const TokenId>, SequenceLess> seen;
    for (std::size_t k : m.profile.k_grid) {
        for (auto w : extract_windows(tokens, k, m.profile.n_windows, m.profile.alignment, m.profile.max_k())) {
            if (seen.insert(w).second) windows.push_back(w);
        }
    }

    const nlohmann::json metadata = {{"manifest_sha256", manifest_sha256(m)},
                                     {"corpus_id", corpus.corpus_id},
                                     {"tokens", tokens},
                                     {"profile", config_to_json(m.profile)}};

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp-" + std::to_string(::getpid());
    try {
        std::ofstream sink(tmp, std::ios::binary | std::ios::trunc);
        if (!sink) fail(Errc::IOError, kModule, "cannot create " + tmp.string());
        record_session(*backend, windows, sink, metadata);
        sink.close();
        if (!sink) fail(Errc::IOError, kModule, "cannot write " + tmp.string());
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    return windows.size();
}

std::vector<Artifact> profile_artifacts(const CognitiveProfile& profile, const std::string& manifest_sha256) {
    const std::span<const CognitiveProfile> one(&profile, 1);
    const std::string stamp = "# manifest_sha256: " + manifest_sha256 + "\n";

    auto tables_json = nlohmann::json::parse(to_table(one, TableFormat::Json));
    tables_json["manifest_sha256"] = manifest_sha256;

    std::string svg = render_edc(plot_spec(one));
    svg.insert(svg.rfind("</svg>"), "<!-- manifest_sha256: " + manifest_sha256 + " -->\n");

    return {
        {"profile.json", profiles_document(one, manifest_sha256)},
        {"tables.csv", to_table(one, TableFormat::Csv) + stamp},
        {"tables.json", tables_json.dump(2) + "\n"},
        {"edc.svg", std::move(svg)},
        {"igs.csv", to_igs_table(one) + stamp},
        {"audit.txt", audit_report(profile, manifest_sha256)},
    };
}

std::vector<Artifact> report_artifacts(std::span<const CognitiveProfile> profiles) {
    return {
        {"tables.csv", to_table(profiles, TableFormat::Csv)},
        {"tables.json", to_table(profiles, TableFormat::Json)},
        {"edc.svg", render_edc(plot_spec(profiles))},
        {"igs.csv", to_igs_table(profiles)},
    };
}

void write_artifacts(const fs::path& dir, const std::vector<Artifact>& artifacts) {
    std::vector<std::pair<fs::path, fs::path>> staged;
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& [tmp, final_path] : staged) fs::remove(tmp, ec);
    };
    try {
        fs::create_directories(dir);
        const std::string suffix = ".tmp-" + std::to_string(::getpid());
        for (const auto& a : artifacts) {
            const fs::path final_path = dir / a.name;
            const fs::path tmp = dir / ("." + a.name + suffix);
            staged.emplace_back(tmp, final_path);
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            f.write(a.contents.data(), static_cast<std::streamsize>(a.contents.size()));
            f.close();
            if (!f) fail(Errc::IOError, kModule, "cannot write " + tmp.string());
        }
        for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
    } catch (const fs::filesystem_error& e) {
        cleanup();
        fail(Errc::IOError, kModule, e.what());
    } catch (...) {
        cleanup();
        throw;
    }
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
    case Errc::ConfigError:
    case Errc::GridMismatch:
    case Errc::InvalidOrder:
        return kExitUsage;
    default:
        return kExitRuntime;
    }
}

} // namespace edc
