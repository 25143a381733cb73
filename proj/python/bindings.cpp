#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "weldwatch/clustering.hpp"
#include "weldwatch/continual.hpp"
#include "weldwatch/dataset.hpp"
#include "weldwatch/detector.hpp"
#include "weldwatch/error.hpp"
#include "weldwatch/experiment.hpp"
#include "weldwatch/mlp.hpp"
#include "weldwatch/pca.hpp"

namespace py = pybind11;
using namespace weldwatch;

namespace {

LabeledBatch batch_of(const Eigen::MatrixXd& x, const std::vector<int>& y) {
    if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw ShapeError("one label per row required");
    return {x, y};
}

py::dict decision_dict(const Decision& d) {
    py::dict out;
    out["outcome"] = outcome_name(d.outcome);
    out["class_id"] = d.assigned_class;
    out["indicator"] = d.indicator;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Open-set condition monitoring with few-shot class-incremental updates";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<FitError>(m, "FitError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<RestoreError>(m, "RestoreError", base.ptr());

    py::class_<MlpModel>(m, "MlpModel")
        .def_readonly("layer_sizes", &MlpModel::layer_sizes)
        .def_readonly("weights", &MlpModel::weights)
        .def_readonly("biases", &MlpModel::biases)
        .def_readwrite("class_labels", &MlpModel::class_labels)
        .def_property_readonly("num_classes", &MlpModel::num_classes)
        .def_property_readonly("num_parameters", &MlpModel::num_parameters)
        .def("to_text", [](const MlpModel& model) { return save_model(model); })
        .def_static("from_text", &load_model)
        .def("__eq__", [](const MlpModel& a, const MlpModel& b) { return a == b; });

    m.def("init_mlp", &init_mlp, py::arg("layer_sizes"), py::arg("seed"));
    m.def(
        "train",
        [](const MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& y, int epochs, double lr,
           int batch_size, std::uint64_t seed, const std::set<int>& frozen) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.learning_rate = lr;
            cfg.batch_size = batch_size;
            cfg.shuffle_seed = seed;
            TrainResult r = train(model, batch_of(x, y), cfg, FreezeSpec{frozen});
            return py::make_tuple(r.model, r.epoch_loss);
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epochs") = 200, py::arg("learning_rate") = 1e-3,
        py::arg("batch_size") = 16, py::arg("seed") = 0, py::arg("frozen") = std::set<int>{});
    m.def("predict_proba", &predict_proba, py::arg("model"), py::arg("x"));
    m.def("predict", &predict, py::arg("model"), py::arg("x"));
    m.def("embed", &embed_rows, py::arg("model"), py::arg("x"), py::arg("layer") = kDefaultEmbedLayer);
    m.def("expand_output", &expand_output, py::arg("model"), py::arg("k"), py::arg("seed"));
    m.def(
        "gradients",
        [](const MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& y) {
            const Gradients g = gradients(model, batch_of(x, y));
            return py::make_tuple(g.weights, g.biases, g.loss);
        },
        py::arg("model"), py::arg("x"), py::arg("y"));

    py::class_<DetectorBank>(m, "DetectorBank")
        .def_readonly("embed_layer", &DetectorBank::embed_layer)
        .def_readwrite("class_labels", &DetectorBank::class_labels)
        .def_property_readonly("num_classes", &DetectorBank::num_classes)
        .def_property_readonly("components",
                               [](const DetectorBank& b) {
                                   std::vector<int> r;
                                   for (const auto& d : b.detectors) r.push_back(d.components());
                                   return r;
                               })
        .def("to_text", [](const DetectorBank& b) { return save_bank(b); })
        .def_static("from_text", &load_bank);

    m.def(
        "fit_detector",
        [](const MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& y, int layer,
           double variance_fraction, int max_components) {
            return fit_detector(model, batch_of(x, y), layer,
                                ComponentPolicy::variance(variance_fraction, max_components));
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("layer") = kDefaultEmbedLayer,
        py::arg("variance_fraction") = 0.9, py::arg("max_components") = 10);
    m.def(
        "detect",
        [](const DetectorBank& bank, const MlpModel& model, const Eigen::MatrixXd& x) {
            py::list out;
            for (const auto& d : detect_rows(bank, model, x)) out.append(decision_dict(d));
            return out;
        },
        py::arg("bank"), py::arg("model"), py::arg("x"));
    m.def("three_sigma_thresholds", &three_sigma_thresholds, py::arg("scores"));

    m.def(
        "pca_fit",
        [](const Eigen::MatrixXd& rows, int r) {
            const PcaFit f = pca_fit(rows, r);
            py::dict out;
            out["center"] = f.center;
            out["projection"] = f.projection;
            out["scores"] = f.scores;
            out["explained_variance"] = f.explained_variance;
            out["total_variance"] = f.total_variance;
            return out;
        },
        py::arg("rows"), py::arg("r"));

    m.def("cosine", &cosine, py::arg("a"), py::arg("b"));
    m.def(
        "similarity",
        [](const std::vector<Eigen::MatrixXd>& classes, const Eigen::MatrixXd& z) {
            const SimilaritySpace space(classes);
            Eigen::MatrixXd out(z.rows(), space.num_classes());
            for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = space.transform(z.row(i).transpose()).s.transpose();
            return out;
        },
        py::arg("class_embeddings"), py::arg("z"));
    m.def(
        "birch_fit",
        [](const Eigen::MatrixXd& points, double threshold, int branching, std::optional<int> target_clusters) {
            std::vector<Eigen::VectorXd> v;
            for (Eigen::Index i = 0; i < points.rows(); ++i) v.push_back(points.row(i).transpose());
            BirchOptions opts;
            opts.threshold = threshold;
            opts.branching = branching;
            opts.target_clusters = target_clusters;
            const ClusterReport r = birch_fit(v, opts);
            py::list clusters;
            for (const auto& c : r.clusters) {
                py::dict d;
                d["cluster_id"] = c.cluster_id;
                d["members"] = c.members;
                d["centroid"] = c.centroid;
                d["radius"] = c.radius;
                d["representatives"] = c.representatives;
                clusters.append(d);
            }
            return py::make_tuple(r.assignment, clusters);
        },
        py::arg("points"), py::arg("threshold") = 2.0, py::arg("branching") = 50,
        py::arg("target_clusters") = py::none());
    m.def("purity", py::overload_cast<const std::vector<int>&, const std::vector<std::string>&>(&purity),
          py::arg("assignment"), py::arg("labels"));

    m.def(
        "default_scenario",
        [](std::uint64_t seed) {
            const ScenarioSpec spec = default_scenario();
            const Dataset ds = synth_generate(spec, seed);
            std::vector<std::string> ids, labels;
            for (const auto& r : ds.records) {
                ids.push_back(r.sample_id);
                labels.push_back(*r.label);
            }
            py::dict out;
            out["x"] = feature_matrix(ds);
            out["labels"] = labels;
            out["ids"] = ids;
            out["known"] = spec.known;
            out["unknown"] = spec.unknown;
            return out;
        },
        py::arg("seed"));
}
