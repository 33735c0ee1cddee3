#include "edc/app.hpp"
#include "edc/corpus.hpp"
#include "edc/entropy.hpp"
#include "edc/ngram.hpp"
#include "edc/profiler.hpp"
#include "edc/remote.hpp"
#include "edc/replay.hpp"
#include "edc/report.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;

namespace {

edc::TableFormat table_format(const std::string& name) {
    if (name == "csv") return edc::TableFormat::Csv;
    if (name == "json") return edc::TableFormat::Json;
    edc::fail(edc::Errc::ConfigError, "report", "format must be csv or json");
}

py::dict descriptor_dict(const edc::BackendDescriptor& d) {
    py::dict out;
    out["name"] = d.name;
    out["vocab_size"] = d.vocab_size;
    out["kind"] = std::string(edc::to_string(d.kind));
    out["tokenizer_id"] = d.tokenizer_id;
    out["context_limit"] = d.context_limit;
    out["returns"] = d.output == edc::OutputKind::Logits ? "logits" : "probs";
    return out;
}

} // namespace

PYBIND11_MODULE(_edc, m) {
    m.doc() = "Entropy Decay Curve profiler core.";

    static py::exception<edc::Error> error_type(m, "EdcError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const edc::Error& e) {
            py::object args = py::make_tuple(e.what(), std::string(edc::errc_name(e.code())), e.module());
            PyErr_SetObject(error_type.ptr(), args.ptr());
        }
    });

    m.def("softmax_stable", [](const std::vector<double>& logits) { return edc::softmax_stable(logits); });
    m.def("entropy_bits", [](const std::vector<double>& probs) { return edc::entropy_bits(probs); });
    m.def("uncertainty_index", &edc::uncertainty_index, py::arg("h_bits"), py::arg("marginal_bits"));
    m.def("igs", &edc::igs, py::arg("u_small"), py::arg("u_large"));

    py::class_<edc::MeanDistributionAccumulator>(m, "MeanDistributionAccumulator")
        .def(py::init<std::size_t>(), py::arg("vocab_size"))
        .def("add", [](edc::MeanDistributionAccumulator& a, const std::vector<double>& p) { a.add(p); })
        .def("merge", &edc::MeanDistributionAccumulator::merge)
        .def_property_readonly("count", &edc::MeanDistributionAccumulator::count)
        .def("mean", &edc::MeanDistributionAccumulator::mean);

    py::class_<edc::Tokenizer>(m, "Tokenizer")
        .def_static("bytes", &edc::Tokenizer::bytes)
        .def_static("words_from_corpus", &edc::Tokenizer::words_from_corpus, py::arg("text"), py::arg("vocab_cap"))
        .def_property_readonly("id", &edc::Tokenizer::id)
        .def_property_readonly("vocab_size", &edc::Tokenizer::vocab_size)
        .def("encode", &edc::Tokenizer::encode)
        .def("decode", [](const edc::Tokenizer& t, const edc::TokenSequence& ids) { return t.decode(ids); });

    py::class_<edc::CleanedCorpus>(m, "CleanedCorpus")
        .def_readonly("text", &edc::CleanedCorpus::text)
        .def_readonly("corpus_id", &edc::CleanedCorpus::corpus_id)
        .def_readonly("char_count", &edc::CleanedCorpus::char_count)
        .def_readonly("warnings", &edc::CleanedCorpus::warnings);
    m.def("strip_boilerplate", &edc::strip_boilerplate, py::arg("raw"), py::arg("marker"),
          py::arg("corpus_id") = "");

    py::class_<edc::NGramModel, std::shared_ptr<edc::NGramModel>>(m, "NGramModel")
        .def_static(
            "train",
            [](const edc::TokenSequence& tokens, std::size_t order, double lambda, const edc::Tokenizer& tok) {
                return std::make_shared<edc::NGramModel>(edc::NGramModel::train(tokens, order, lambda, tok));
            },
            py::arg("tokens"), py::arg("order"), py::arg("lambda_"), py::arg("tokenizer") = edc::Tokenizer::bytes())
        .def_static("load",
                    [](const std::filesystem::path& p) {
                        return std::make_shared<edc::NGramModel>(edc::NGramModel::load(p));
                    })
        .def("save", &edc::NGramModel::save)
        .def_property_readonly("order", &edc::NGramModel::order)
        .def_property_readonly("lambda_", &edc::NGramModel::lambda)
        .def_property_readonly("vocab_size", &edc::NGramModel::vocab_size)
        .def_property_readonly("tokenizer", &edc::NGramModel::tokenizer)
        .def("probability", [](const edc::NGramModel& model, const edc::TokenSequence& ctx, edc::TokenId next) {
            return model.probability(ctx, next);
        });

    py::class_<edc::Backend, std::shared_ptr<edc::Backend>>(m, "Backend")
        .def_property_readonly("descriptor", [](const edc::Backend& b) { return descriptor_dict(b.descriptor()); })
        .def("tokenize", &edc::Backend::tokenize)
        .def("evaluate", [](const edc::Backend& b, const edc::TokenSequence& ctx) { return b.evaluate(ctx); });

    py::class_<edc::NGramBackend, edc::Backend, std::shared_ptr<edc::NGramBackend>>(m, "NGramBackend")
        .def(py::init([](std::shared_ptr<edc::NGramModel> model, std::string name) {
                 return std::make_shared<edc::NGramBackend>(std::move(model), std::move(name));
             }),
             py::arg("model"), py::arg("name") = "");
    py::class_<edc::UniformBackend, edc::Backend, std::shared_ptr<edc::UniformBackend>>(m, "UniformBackend")
        .def(py::init<std::size_t>(), py::arg("vocab_size") = 256);
    py::class_<edc::DeltaBackend, edc::Backend, std::shared_ptr<edc::DeltaBackend>>(m, "DeltaBackend")
        .def_static("constant",
                    [](std::size_t vocab, edc::TokenId target) {
                        return std::make_shared<edc::DeltaBackend>(edc::DeltaBackend::constant(vocab, target));
                    })
        .def_static("echo_last", [](std::size_t vocab) {
            return std::make_shared<edc::DeltaBackend>(edc::DeltaBackend::echo_last(vocab));
        });
    py::class_<edc::ReplayBackend, edc::Backend, std::shared_ptr<edc::ReplayBackend>>(m, "ReplayBackend")
        .def(py::init<const std::filesystem::path&>(), py::arg("path"));
    py::class_<edc::RemoteBackend, edc::Backend, std::shared_ptr<edc::RemoteBackend>>(m, "RemoteBackend")
        .def_static("connect", [](const std::string& address) {
            return std::shared_ptr<edc::RemoteBackend>(edc::RemoteBackend::connect(address));
        });

    py::class_<edc::ProfileConfig>(m, "ProfileConfig")
        .def(py::init<>())
        .def_readwrite("k_grid", &edc::ProfileConfig::k_grid)
        .def_readwrite("n_windows", &edc::ProfileConfig::n_windows)
        .def_property(
            "alignment", [](const edc::ProfileConfig& c) { return std::string(edc::to_string(c.alignment)); },
            [](edc::ProfileConfig& c, const std::string& a) { c.alignment = edc::alignment_from_string(a); })
        .def_readwrite("collapse_threshold", &edc::ProfileConfig::collapse_threshold)
        .def_readwrite("collapse_k_min", &edc::ProfileConfig::collapse_k_min)
        .def_readwrite("igs_k_small", &edc::ProfileConfig::igs_k_small)
        .def_readwrite("igs_k_large", &edc::ProfileConfig::igs_k_large)
        .def("validate", &edc::ProfileConfig::validate);

    py::class_<edc::EntropyRecord>(m, "EntropyRecord")
        .def(py::init([](std::size_t k, std::size_t n, double h, double H, std::optional<double> u) {
                 return edc::EntropyRecord{k, n, h, H, u};
             }),
             py::arg("k"), py::arg("n"), py::arg("h_k"), py::arg("H_k"), py::arg("u_k"))
        .def_readonly("k", &edc::EntropyRecord::k)
        .def_readonly("n", &edc::EntropyRecord::n)
        .def_readonly("h_k", &edc::EntropyRecord::h_k)
        .def_readonly("H_k", &edc::EntropyRecord::H_k)
        .def_readonly("u_k", &edc::EntropyRecord::u_k);

    py::class_<edc::CognitiveProfile>(m, "CognitiveProfile")
        .def_property_readonly("backend", [](const edc::CognitiveProfile& p) { return descriptor_dict(p.backend); })
        .def_readonly("corpus_id", &edc::CognitiveProfile::corpus_id)
        .def_readonly("config", &edc::CognitiveProfile::config)
        .def_readonly("records", &edc::CognitiveProfile::records)
        .def_readonly("igs", &edc::CognitiveProfile::igs)
        .def_property_readonly("collapse_flags",
                               [](const edc::CognitiveProfile& p) {
                                   std::vector<std::pair<std::size_t, double>> out;
                                   for (const auto& f : p.collapse_flags) out.emplace_back(f.k, f.u_k);
                                   return out;
                               })
        .def("__eq__", [](const edc::CognitiveProfile& a, const edc::CognitiveProfile& b) { return a == b; });

    m.def(
        "run_profile",
        [](const edc::Backend& backend, const edc::TokenSequence& tokens, const edc::ProfileConfig& config,
           std::string corpus_id, std::size_t jobs) {
            return edc::run_profile(backend, tokens, config, std::move(corpus_id), edc::ProfileOptions{jobs});
        },
        py::arg("backend"), py::arg("tokens"), py::arg("config"), py::arg("corpus_id"), py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "detect_collapse",
        [](const std::vector<edc::EntropyRecord>& records, double threshold, std::size_t k_min) {
            std::vector<std::size_t> ks;
            for (const auto& f : edc::detect_collapse(records, threshold, k_min)) ks.push_back(f.k);
            return ks;
        },
        py::arg("records"), py::arg("threshold") = 0.05, py::arg("k_min") = 90);

    m.def(
        "to_table",
        [](const std::vector<edc::CognitiveProfile>& ps, const std::string& fmt) {
            return edc::to_table(ps, table_format(fmt));
        },
        py::arg("profiles"), py::arg("format") = "csv");
    m.def("to_igs_table", [](const std::vector<edc::CognitiveProfile>& ps) { return edc::to_igs_table(ps); });
    m.def(
        "render_edc",
        [](const std::vector<edc::CognitiveProfile>& ps, std::string title) {
            return edc::render_edc(edc::plot_spec(ps, std::move(title)));
        },
        py::arg("profiles"), py::arg("title") = "Entropy Decay Curve");
    m.def("profile_to_json", [](const edc::CognitiveProfile& p) { return edc::profile_to_json(p).dump(2); });
    m.def(
        "profiles_document",
        [](const std::vector<edc::CognitiveProfile>& ps, const std::string& sha) {
            return edc::profiles_document(ps, sha);
        },
        py::arg("profiles"), py::arg("manifest_sha256") = "");
    m.def("parse_profiles_document", [](const std::string& text) { return edc::parse_profiles_document(text); });

    m.def(
        "profile_manifest",
        [](const std::string& manifest_json) {
            nlohmann::json parsed;
            try {
                parsed = nlohmann::json::parse(manifest_json);
            } catch (const nlohmann::json::exception& e) {
                edc::fail(edc::Errc::ConfigError, "cli", std::string("malformed manifest: ") + e.what());
            }
            const auto manifest = edc::manifest_from_json(parsed);
            py::gil_scoped_release release;
            auto run = edc::profile_manifest(manifest);
            return std::make_pair(std::move(run.profile), std::move(run.manifest_sha256));
        },
        py::arg("manifest_json"));
}
