#include "logging.hpp"

#include "edc/app.hpp"
#include "edc/corpus.hpp"
#include "edc/io.hpp"
#include "edc/ngram.hpp"
#include "edc/report.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <optional>
#include <thread>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunFlags {
    std::string manifest;
    std::string corpus;
    std::string marker;
    std::string corpus_id;
    std::size_t token_budget = 0;
    std::string backend;
    std::string model;
    std::string address;
    std::string name;
    std::size_t vocab = 256;
    std::string delta_rule;
    std::uint32_t delta_target = 0;
    std::vector<std::size_t> k;
    std::size_t n = 0;
    std::string alignment;
    double collapse_threshold = 0.0;
    std::size_t collapse_kmin = 0;
    std::size_t igs_small = 0;
    std::size_t igs_large = 0;
    std::string out;
    std::size_t jobs = 0;
    std::uint64_t seed = 0;
    std::string session;
};

struct Options {
    std::map<std::string, CLI::Option*> by_name;
    bool given(const std::string& name) const {
        auto it = by_name.find(name);
        return it != by_name.end() && it->second->count() > 0;
    }
};

void add_run_options(CLI::App* cmd, RunFlags& f, Options& o, bool with_backend) {
    auto add = [&](const std::string& flag, auto& target, const std::string& help) {
        o.by_name[flag] = cmd->add_option("--" + flag, target, help);
        return o.by_name[flag];
    };
    add("manifest", f.manifest, "run manifest (JSON)")->check(CLI::ExistingFile);
    add("corpus", f.corpus, "corpus text file, or a corpus manifest (.json)");
    add("marker", f.marker, "text the analysis starts at");
    add("corpus-id", f.corpus_id, "corpus label (default: file stem)");
    add("token-budget", f.token_budget, "tokens kept after the marker (default: max(k) + n)");
    if (with_backend) {
        add("backend", f.backend, "ngram, replay, remote, uniform or delta")
            ->check(CLI::IsMember({"ngram", "replay", "remote", "uniform", "delta"}));
        add("address", f.address, "HOST:PORT or stdio:COMMAND for the remote backend");
        add("vocab", f.vocab, "vocabulary size for the uniform and delta backends");
        add("delta-rule", f.delta_rule, "echo_last or constant")->check(CLI::IsMember({"echo_last", "constant"}));
        add("delta-target", f.delta_target, "predicted token for the constant delta rule");
        add("name", f.name, "model label used in tables and plots");
    }
    add("model", f.model, "n-gram model file, or replay session file");
    add("k", f.k, "comma-separated context lengths")->delimiter(',');
    add("n", f.n, "windows per context length");
    add("alignment", f.alignment, "start or end")->check(CLI::IsMember({"start", "end"}));
    add("collapse-threshold", f.collapse_threshold, "u_k below this flags collapse");
    add("collapse-kmin", f.collapse_kmin, "smallest k checked for collapse");
    add("igs-small", f.igs_small, "k_small for IGS");
    add("igs-large", f.igs_large, "k_large for IGS");
    add("out", f.out, "output directory");
    add("jobs", f.jobs, "worker threads (default: hardware concurrency)");
    add("seed", f.seed, "reserved; the pipeline is deterministic");
}

json manifest_json(const RunFlags& f, const Options& o) {
    json j = f.manifest.empty() ? json::object() : edc::load_manifest_json(f.manifest);
    json overlay = json::object();
    auto set_if = [&](const char* flag, json& obj, const char* key, const json& value) {
        if (o.given(flag)) obj[key] = value;
    };

    json corpus = json::object();
    if (o.given("corpus")) {
        if (fs::path(f.corpus).extension() == ".json") corpus["manifest"] = f.corpus;
        else corpus["path"] = f.corpus;
    }
    set_if("marker", corpus, "start_marker", f.marker);
    set_if("corpus-id", corpus, "corpus_id", f.corpus_id);
    set_if("token-budget", corpus, "token_budget", f.token_budget);

    json backend = json::object();
    set_if("backend", backend, "kind", f.backend);
    set_if("model", backend, "model", f.model);
    set_if("address", backend, "address", f.address);
    set_if("vocab", backend, "vocab_size", f.vocab);
    set_if("delta-rule", backend, "delta_rule", f.delta_rule);
    set_if("delta-target", backend, "delta_target", f.delta_target);
    set_if("name", backend, "name", f.name);
    if (o.given("delta-target") && !o.given("delta-rule")) backend["delta_rule"] = "constant";

    json profile = json::object();
    set_if("k", profile, "k_grid", f.k);
    set_if("n", profile, "n", f.n);
    set_if("alignment", profile, "alignment", f.alignment);
    set_if("collapse-threshold", profile, "collapse_threshold", f.collapse_threshold);
    set_if("collapse-kmin", profile, "collapse_k_min", f.collapse_kmin);
    set_if("igs-small", profile, "igs_k_small", f.igs_small);
    set_if("igs-large", profile, "igs_k_large", f.igs_large);

    if (!corpus.empty()) overlay["corpus"] = corpus;
    if (!backend.empty()) overlay["backend"] = backend;
    if (!profile.empty()) overlay["profile"] = profile;
    set_if("out", overlay, "out", f.out);
    set_if("jobs", overlay, "jobs", f.jobs);

    if (o.given("corpus") && j.contains("corpus")) j.erase("corpus");
    edc::merge_json(j, overlay);
    if (!j.contains("jobs")) j["jobs"] = std::max(1u, std::thread::hardware_concurrency());
    return j;
}

void print_summary(const edc::CognitiveProfile& p, bool quiet) {
    const std::span<const edc::CognitiveProfile> one(&p, 1);
    if (quiet) {
        std::cout << edc::to_table(one, edc::TableFormat::Csv);
        return;
    }
    std::printf("%s on %s\n", p.backend.name.c_str(), p.corpus_id.c_str());
    std::printf("%8s %10s %10s %8s\n", "k", "h_k", "H_k", "u_k");
    for (const auto& r : p.records) {
        std::printf("%8zu %10s %10s %8s\n", r.k, edc::format_fixed4(r.h_k).c_str(),
                    edc::format_fixed4(r.H_k).c_str(), edc::display_value(r.u_k).c_str());
    }
    std::printf("IGS(%zu, %zu) = %s\n", p.config.igs_k_small, p.config.igs_k_large,
                edc::display_value(p.igs).c_str());
    if (!p.collapse_flags.empty()) {
        std::printf("collapse detected at %zu grid point(s)\n", p.collapse_flags.size());
    }
}

int run_profile_command(const RunFlags& f, const Options& o, bool quiet, bool force_replay) {
    json j = manifest_json(f, o);
    if (force_replay) {
        j["backend"]["kind"] = "replay";
        if (!f.session.empty()) j["backend"]["model"] = f.session;
    }
    const edc::RunManifest m = edc::manifest_from_json(j);
    if (m.out.empty()) edc::fail(edc::Errc::ConfigError, "cli", "no output directory (--out)");
    if (f.seed != 0) spdlog::debug("--seed {} ignored; the pipeline is deterministic", f.seed);
    spdlog::info("profiling {} windows at {} context lengths with {} job(s)", m.profile.n_windows,
                 m.profile.k_grid.size(), m.jobs);

    edc::ProfileRun run;
    try {
        run = edc::profile_manifest(m);
    } catch (const edc::ProfileError& e) {
        spdlog::error("{}", e.what());
        const std::string hash = m.backend.kind == edc::BackendKind::Replay ? std::string() : edc::manifest_sha256(m);
        edc::write_artifacts(m.out, edc::profile_artifacts(e.partial(), hash));
        spdlog::warn("wrote partial profile with {} completed grid entries to {}", e.partial().records.size(),
                     m.out.string());
        return edc::exit_code_for(e);
    }
    edc::write_artifacts(m.out, edc::profile_artifacts(run.profile, run.manifest_sha256));
    spdlog::info("wrote artifacts to {}", m.out.string());
    print_summary(run.profile, quiet);
    if (!run.profile.collapse_flags.empty()) {
        spdlog::warn("entropy collapse flagged at {} grid point(s); see audit.txt", run.profile.collapse_flags.size());
        return edc::kExitCollapse;
    }
    return edc::kExitOk;
}

int run_record_command(const RunFlags& f, const Options& o) {
    const edc::RunManifest m = edc::manifest_from_json(manifest_json(f, o));
    fs::path session = f.session;
    if (session.empty()) {
        if (m.out.empty()) edc::fail(edc::Errc::ConfigError, "cli", "give --session or --out");
        session = m.out / "session.edcr";
    }
    const std::size_t count = edc::record_manifest(m, session);
    spdlog::info("recorded {} windows to {}", count, session.string());
    return edc::kExitOk;
}

struct TrainFlags {
    std::string corpus;
    std::string marker;
    std::size_t token_budget = 0;
    std::size_t order = 3;
    double lambda = 0.01;
    std::string tokenizer = "bytes";
    std::size_t vocab_cap = 4096;
    std::string out;
};

int run_train_command(const TrainFlags& f) {
    edc::CorpusSpec spec;
    if (fs::path(f.corpus).extension() == ".json") spec = edc::load_corpus_manifest(f.corpus);
    else spec.source = f.corpus;
    if (!f.marker.empty()) spec.start_marker = f.marker;
    if (f.token_budget) spec.token_budget = f.token_budget;
    const edc::CleanedCorpus corpus = edc::ingest(spec);
    for (const auto& w : corpus.warnings) spdlog::warn("{}", w);

    const edc::Tokenizer tokenizer = f.tokenizer == "words"
                                         ? edc::Tokenizer::words_from_corpus(corpus.text, f.vocab_cap)
                                         : edc::Tokenizer::bytes();
    edc::TokenSequence tokens = tokenizer.encode(corpus.text);
    if (spec.token_budget && tokens.size() > spec.token_budget) tokens.resize(spec.token_budget);
    const auto model = edc::NGramModel::train(tokens, f.order, f.lambda, tokenizer);
    model.save(f.out);
    spdlog::info("trained order-{} model on {} tokens ({} contexts) -> {}", f.order, tokens.size(),
                 model.context_count(), f.out);
    return edc::kExitOk;
}

int run_report_command(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<edc::CognitiveProfile> profiles;
    for (const auto& path : inputs) {
        auto parsed = edc::parse_profiles_document(edc::read_file(path));
        profiles.insert(profiles.end(), parsed.begin(), parsed.end());
    }
    edc::write_artifacts(out, edc::report_artifacts(profiles));
    spdlog::info("wrote report for {} profile(s) to {}", profiles.size(), out);
    return edc::kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropy Decay Curve profiler"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only machine-readable output on stdout");

    RunFlags profile_flags;
    Options profile_opts;
    auto* profile = app.add_subcommand("profile", "profile a backend on a corpus and write all artifacts");
    add_run_options(profile, profile_flags, profile_opts, true);

    RunFlags replay_flags;
    Options replay_opts;
    auto* replay = app.add_subcommand("replay", "profile a recorded session");
    add_run_options(replay, replay_flags, replay_opts, false);
    replay->add_option("--session", replay_flags.session, "replay session file (same as --model)");

    RunFlags record_flags;
    Options record_opts;
    auto* record = app.add_subcommand("record", "record every window a profile needs into a replay session");
    add_run_options(record, record_flags, record_opts, true);
    record->add_option("--session", record_flags.session, "session file to write (default: OUT/session.edcr)");

    TrainFlags train_flags;
    auto* train = app.add_subcommand("ngram-train", "train an add-lambda n-gram model");
    train->add_option("--corpus", train_flags.corpus, "corpus text file or corpus manifest")->required();
    train->add_option("--marker", train_flags.marker, "text the training data starts at");
    train->add_option("--token-budget", train_flags.token_budget, "train on at most this many tokens");
    train->add_option("--order", train_flags.order, "n-gram order");
    train->add_option("--lambda", train_flags.lambda, "additive smoothing pseudo-count");
    train->add_option("--tokenizer", train_flags.tokenizer, "bytes or words")
        ->check(CLI::IsMember({"bytes", "words"}));
    train->add_option("--vocab-cap", train_flags.vocab_cap, "word vocabulary cap");
    train->add_option("--out", train_flags.out, "model file to write")->required();

    std::vector<std::string> report_inputs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "combine profile.json files into tables and one figure");
    report->add_option("profiles", report_inputs, "profile.json files")->required();
    report->add_option("--out", report_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? edc::kExitOk : edc::kExitUsage;
    }

    edc::tools::init_logging(quiet);
    try {
        if (*profile) return run_profile_command(profile_flags, profile_opts, quiet, false);
        if (*replay) return run_profile_command(replay_flags, replay_opts, quiet, true);
        if (*record) return run_record_command(record_flags, record_opts);
        if (*train) return run_train_command(train_flags);
        if (*report) return run_report_command(report_inputs, report_out);
    } catch (const edc::Error& e) {
        spdlog::error("{} [{}]", e.what(), edc::errc_name(e.code()));
        return edc::exit_code_for(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return edc::kExitRuntime;
    }
    return edc::kExitUsage;
}
