#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "urbanfuse/csv.hpp"
#include "urbanfuse/fusion.hpp"
#include "urbanfuse/metrics.hpp"
#include "urbanfuse/session.hpp"
#include "urbanfuse/synthetic.hpp"
#include "urbanfuse/tsne.hpp"

namespace py = pybind11;
using namespace urbanfuse;

namespace {

// JSON crosses the boundary as text; the Python wrapper does dumps/loads.
nlohmann::json parse(const std::string& text) { return text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text); }

py::dict dataset_dict(const Dataset& d) {
    py::dict out;
    out["node_ids"] = d.graph.ids();
    std::vector<double> lon, lat;
    for (const auto& c : d.graph.coords()) {
        lon.push_back(c.lon);
        lat.push_back(c.lat);
    }
    out["lon"] = lon;
    out["lat"] = lat;
    out["edges"] = d.graph.edges();
    out["static"] = d.static_features;
    std::vector<std::string> names;
    for (const auto& c : d.static_columns) names.push_back(c.name);
    out["static_columns"] = names;
    out["dynamic"] = d.dynamic_series;
    std::vector<std::string> axis;
    for (const auto& ym : d.time_axis) axis.push_back(ym.str());
    out["time_axis"] = axis;
    if (d.labels) out["labels"] = *d.labels;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Graph autoencoder fusion toolkit";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<pipeline::StageError>(m, "StageError", PyExc_RuntimeError);

    m.def("dist_dtw", [](const std::vector<double>& a, const std::vector<double>& b) { return metrics::dist_dtw(a, b); });
    m.def("dist_euclidean", [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) throw std::invalid_argument("dist_euclidean: length mismatch");
        return metrics::dist_euclidean(a, b);
    });
    m.def("adjusted_rand_index",
          [](const std::vector<int>& a, const std::vector<int>& b) { return metrics::adjusted_rand_index(a, b); });
    m.def(
        "kmeans",
        [](const Matrix& points, int k, std::uint64_t seed) {
            const auto r = metrics::kmeans(points, k, seed);
            return py::make_tuple(r.labels, r.centers, r.inertia);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0);
    m.def(
        "silhouette_pairs",
        [](const Matrix& static_features, const Matrix& dynamic_series, const std::vector<int>& labels, int k) {
            Dataset d;
            std::vector<NodeId> ids;
            std::vector<GeoPoint> coords;
            for (Eigen::Index i = 0; i < static_features.rows(); ++i) {
                ids.push_back(i);
                coords.push_back({0.0, 0.0});
            }
            d.graph = StreetGraph(ids, coords, {});
            d.static_features = static_features;
            d.dynamic_series = dynamic_series;
            metrics::OriginalSpaceDistances dist(d);
            std::vector<std::tuple<int, int, double, double>> out;
            for (const auto& p : metrics::evaluate_labels(labels, k, dist, 0, std::nullopt))
                out.emplace_back(p.cluster_a, p.cluster_b, p.s_static, p.s_dynamic);
            return out;
        },
        py::arg("static_features"), py::arg("dynamic_series"), py::arg("labels"), py::arg("k"));

    m.def(
        "tsne",
        [](const Matrix& embedding, const std::string& config) {
            const auto r = tsne::project(embedding, parse(config).get<tsne::TsneConfig>());
            return py::make_tuple(r.coords, r.kl_trace, r.achieved_perplexity);
        },
        py::arg("embedding"), py::arg("config") = "");

    m.def(
        "generate_synthetic",
        [](int rows, int cols, const std::string& config, std::uint64_t graph_seed) {
            const auto c = parse(config).get<synth::SynthConfig>();
            return dataset_dict(synth::generate(synth::grid_street_graph(rows, cols, graph_seed), c));
        },
        py::arg("rows"), py::arg("cols"), py::arg("config") = "", py::arg("graph_seed") = 0);
    m.def("load_dataset", [](const std::filesystem::path& dir) {
        return dataset_dict(load_dataset(DatasetPaths::in_directory(dir)));
    });

    m.def(
        "run_all",
        [](const std::string& config, const std::filesystem::path& out) {
            py::gil_scoped_release release;
            return pipeline::run_all(pipeline::ExperimentConfig::from_json(parse(config)), out).layout.root;
        },
        py::arg("config"), py::arg("out"));
    m.def("config_hash",
          [](const std::string& config) { return pipeline::ExperimentConfig::from_json(parse(config)).hash(); });
    m.def("report", [](const std::filesystem::path& dir) { return pipeline::report(dir).to_json().dump(); });
    m.def("read_matrix", [](const std::filesystem::path& path) {
        auto t = csv::read_matrix(path);
        return py::make_tuple(t.header, t.ids, t.values);
    });
}
