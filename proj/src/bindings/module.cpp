#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tracemind/pipeline.hpp"

namespace py = pybind11;
using namespace tracemind;

namespace {

// JSON round-trips keep the binding layer thin; the python wrapper decodes.
std::string units_to_jsonl(const std::string& trace_text) {
    auto parsed = parse_trace_file(trace_text);
    return serialize_units(parsed.units);
}

std::string plan_and_run(const std::string& config_path, const std::string& units_path,
                         const std::string& command, const std::string& scenario_path,
                         bool learned) {
    Pipeline pipe = Pipeline::open(config_path.empty()
                                       ? default_config(std::filesystem::current_path())
                                       : load_config(config_path));
    auto parsed = parse_trace_path(units_path);
    std::optional<EncoderParams> params;
    std::unique_ptr<UnitEmbedder> embedder;
    if (learned) {
        params = train_encoder(parsed.units, pipe);
        embedder = std::make_unique<LearnedEmbedder>(*params, *pipe.provider);
    } else {
        embedder = std::make_unique<RawMeanEmbedder>(*pipe.provider);
    }
    IntentIndex index = build_index(parsed.units, *embedder, pipe);
    PlanMemory memory;
    HintGenerator generator(pipe.templates, pipe.bindings, pipe.phi);
    Planner planner(&index, &memory, pipe.labeler, generator, *embedder, pipe.phi, pipe.templates,
                    pipe.bindings, pipe.cfg.planner);
    SuiteTask task{"task", command, scenario_path};
    TaskRun run = run_task(task, planner, &index, embedder.get(), pipe);
    json out;
    out["decision"] = cache_decision_to_json(run.outcome.decision);
    out["plan"] = plan_to_json(run.outcome.plan);
    out["record"] = record_to_json(run.record);
    return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "intent mining, skill induction, and plan execution core";

    py::class_<HashingProvider>(m, "HashingProvider")
        .def(py::init([](int dimension, uint64_t seed) {
                 ProviderConfig cfg;
                 cfg.dimension = dimension;
                 cfg.hash_seed = seed;
                 return HashingProvider(cfg);
             }),
             py::arg("dimension") = 3072, py::arg("seed") = 0x9e3779b97f4a7c15ULL)
        .def("embed",
             [](HashingProvider& p, const std::string& text) { return p.embed_text(text).vector; })
        .def_property_readonly("dimension", &HashingProvider::dimension);

    m.def(
        "signature_distance",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
            auto d = d_sig(a, b);
            return py::make_tuple(d.normalized, d.raw);
        },
        py::arg("a"), py::arg("b"), "normalized and raw edit distance over verb signatures");

    m.def(
        "medoid_index",
        [](const std::vector<std::vector<std::string>>& signatures) {
            std::vector<std::pair<std::string, VerbSignature>> candidates;
            for (size_t i = 0; i < signatures.size(); ++i) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%06zu", i);
                candidates.emplace_back(buf, signatures[i]);
            }
            return std::stoul(medoid(candidates));
        },
        py::arg("signatures"), "index of the medoid signature");

    m.def(
        "hdbscan_labels",
        [](const Eigen::MatrixXd& points, int min_cluster_size, int min_samples) {
            std::vector<Vec> pts;
            pts.reserve(points.rows());
            for (Eigen::Index i = 0; i < points.rows(); ++i)
                pts.push_back(points.row(i).transpose());
            ClusterParams params;
            params.min_cluster_size = min_cluster_size;
            params.min_samples = min_samples;
            return hdbscan(pts, params).labels;
        },
        py::arg("points"), py::arg("min_cluster_size") = 2, py::arg("min_samples") = 1,
        "flat cluster labels (-1 is noise)");

    m.def("parse_traces", &units_to_jsonl, py::arg("text"),
          "parse line-delimited trace records; returns canonical JSONL");

    m.def("plan_and_run", &plan_and_run, py::arg("config_path"), py::arg("units_path"),
          py::arg("command"), py::arg("scenario_path"), py::arg("learned") = false,
          "mine a corpus, plan a command, execute it; returns a JSON report");

    m.attr("__version__") = "0.1.0";
}
