#include "urbanfuse/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <set>

#include "httplib.h"

#include "urbanfuse/csv.hpp"
#include "urbanfuse/session.hpp"

namespace urbanfuse::explorer {

using fusion::FusionKind;

namespace {

// Integer-valued columns with more levels than this are treated as continuous.
constexpr std::size_t kMaxDiscreteLevels = 20;

std::string column_label(const FeatureColumn& c) { return c.unit.empty() ? c.name : c.name + " [" + c.unit + "]"; }

// Type 7 (linear interpolation between order statistics) on sorted input.
double quantile_sorted(const std::vector<double>& v, double q) {
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

nlohmann::json box_json(const BoxStats& b) {
    return {{"min", b.min},
            {"q1", b.q1},
            {"median", b.median},
            {"q3", b.q3},
            {"max", b.max},
            {"whisker_low", b.whisker_low},
            {"whisker_high", b.whisker_high},
            {"mean", b.mean},
            {"std_dev", b.std_dev},
            {"count", b.count},
            {"outliers", b.outliers}};
}

}  // namespace

SelectionRequest SelectionRequest::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw RequestError(400, "selection must be a JSON object");
    SelectionRequest r;
    if (j.contains("node_ids")) {
        if (!j.at("node_ids").is_array()) throw RequestError(400, "node_ids must be an array");
        for (const auto& v : j.at("node_ids")) {
            if (!v.is_number_integer()) throw RequestError(400, "node_ids must hold integers");
            r.node_ids.push_back(v.get<NodeId>());
        }
    }
    if (j.contains("source_model")) {
        const auto name = j.at("source_model").get<std::string>();
        const auto kind = fusion::kind_from_name(name);
        if (!kind) throw RequestError(400, "unknown source_model '" + name + "'");
        r.source_model = *kind;
    }
    return r;
}

BoxStats box_stats(std::vector<double> values) {
    BoxStats b;
    b.count = values.size();
    if (values.empty()) return b;
    std::sort(values.begin(), values.end());
    b.min = values.front();
    b.max = values.back();
    b.q1 = quantile_sorted(values, 0.25);
    b.median = quantile_sorted(values, 0.5);
    b.q3 = quantile_sorted(values, 0.75);
    const double iqr = b.q3 - b.q1;
    const double fence_lo = b.q1 - 1.5 * iqr;
    const double fence_hi = b.q3 + 1.5 * iqr;
    b.whisker_low = *std::find_if(values.begin(), values.end(), [&](double v) { return v >= fence_lo; });
    b.whisker_high = *std::find_if(values.rbegin(), values.rend(), [&](double v) { return v <= fence_hi; });
    for (double v : values)
        if (v < fence_lo || v > fence_hi) b.outliers.push_back(v);
    double sum = 0.0;
    for (double v : values) sum += v;
    b.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - b.mean) * (v - b.mean);
    b.std_dev = std::sqrt(ss / static_cast<double>(values.size()));
    return b;
}

ExplorerSession ExplorerSession::load(const std::filesystem::path& session_dir) {
    const pipeline::SessionLayout layout{session_dir};
    std::ifstream in(layout.config());
    if (!in) throw DataError("explorer: no config.json in " + session_dir.string());
    const auto config = pipeline::ExperimentConfig::from_json(nlohmann::json::parse(in));

    ExplorerSession s;
    s.config_hash_ = config.hash();
    s.raw_ = load_dataset(DatasetPaths::in_directory(layout.dataset_dir()));
    s.display_ = normalize_features(s.raw_, NormScheme::min_max);
    const auto& ids = s.raw_.graph.ids();
    for (auto kind : fusion::kAllKinds) {
        const auto path = layout.projection(kind);
        if (!std::filesystem::exists(path)) {
            throw DataError("explorer: session incomplete, " + std::string(fusion::display_name(kind)) +
                            " has no projection");
        }
        auto m = csv::read_matrix(path);
        if (m.ids != ids) throw DataError(path.string() + ": node order differs from the dataset");
        s.projections_[kind] = std::move(m.values);
        if (std::filesystem::exists(layout.clusters(kind))) {
            const auto c = csv::read_matrix(layout.clusters(kind));
            std::vector<int> labels;
            for (Eigen::Index i = 0; i < c.values.rows(); ++i) labels.push_back(static_cast<int>(c.values(i, 0)));
            s.clusters_[kind] = std::move(labels);
        }
    }
    const auto& x = s.raw_.static_features;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        std::set<double> levels;
        bool integral = true;
        for (Eigen::Index i = 0; i < x.rows() && integral; ++i) {
            integral = x(i, c) == std::round(x(i, c));
            levels.insert(x(i, c));
        }
        s.discrete_.push_back(integral && levels.size() <= kMaxDiscreteLevels);
    }
    return s;
}

std::size_t ExplorerSession::index_of(NodeId id) const {
    const auto idx = raw_.graph.index_of(id);
    if (!idx) throw RequestError(404, "unknown node id " + std::to_string(id));
    return *idx;
}

nlohmann::json ExplorerSession::meta() const {
    nlohmann::json columns = nlohmann::json::array();
    const auto& norm = display_.normalization;
    for (std::size_t c = 0; c < raw_.static_columns.size(); ++c) {
        const auto& col = raw_.static_columns[c];
        columns.push_back({{"name", col.name},
                           {"unit", col.unit},
                           {"discrete", static_cast<bool>(discrete_[c])},
                           {"min", norm.static_offset[c]},
                           {"max", norm.static_offset[c] + norm.static_scale[c]}});
    }
    nlohmann::json models = nlohmann::json::array();
    for (auto kind : fusion::kAllKinds) models.push_back(fusion::display_name(kind));
    std::vector<std::string> axis;
    for (const auto& ym : raw_.time_axis) axis.push_back(ym.str());
    return {{"config_hash", config_hash_},
            {"num_nodes", raw_.num_nodes()},
            {"models", models},
            {"static_columns", columns},
            {"time_axis", axis},
            {"normalization",
             {{"scheme", "min-max"},
              {"dynamic_min", norm.dynamic_offset},
              {"dynamic_max", norm.dynamic_offset + norm.dynamic_scale}}},
            {"has_labels", raw_.labels.has_value()}};
}

nlohmann::json ExplorerSession::projections() const {
    nlohmann::json sets = nlohmann::json::object();
    for (const auto& [kind, coords] : projections_) {
        std::vector<double> xs(coords.col(0).begin(), coords.col(0).end());
        std::vector<double> ys(coords.col(1).begin(), coords.col(1).end());
        nlohmann::json entry = {{"x", xs}, {"y", ys}};
        if (auto it = clusters_.find(kind); it != clusters_.end()) entry["cluster"] = it->second;
        sets[std::string(fusion::display_name(kind))] = std::move(entry);
    }
    return {{"config_hash", config_hash_}, {"node_ids", raw_.graph.ids()}, {"projections", sets}};
}

nlohmann::json ExplorerSession::map() const {
    std::vector<double> lon;
    std::vector<double> lat;
    for (const auto& c : raw_.graph.coords()) {
        lon.push_back(c.lon);
        lat.push_back(c.lat);
    }
    nlohmann::json edges = nlohmann::json::array();
    const auto& ids = raw_.graph.ids();
    for (auto [a, b] : raw_.graph.edges()) edges.push_back({ids[static_cast<std::size_t>(a)], ids[static_cast<std::size_t>(b)]});
    nlohmann::json out = {{"config_hash", config_hash_}, {"node_ids", ids}, {"lon", lon}, {"lat", lat}, {"edges", edges}};
    if (raw_.labels) out["labels"] = *raw_.labels;
    return out;
}

LinkedStats ExplorerSession::compute_linked_stats(const SelectionRequest& selection) const {
    std::vector<std::size_t> rows;
    rows.reserve(selection.node_ids.size());
    for (NodeId id : selection.node_ids) rows.push_back(index_of(id));

    LinkedStats out;
    const auto& ids = raw_.graph.ids();
    for (auto r : rows) out.map_points.push_back({ids[r], raw_.graph.coords()[r].lon, raw_.graph.coords()[r].lat});

    const auto& x = raw_.static_features;
    const auto& xn = display_.static_features;
    const auto n = static_cast<std::size_t>(x.rows());
    for (std::size_t c = 0; c < raw_.static_columns.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        if (discrete_[c]) {
            BarData bar;
            bar.feature = column_label(raw_.static_columns[c]);
            std::set<double> levels(x.col(col).begin(), x.col(col).end());
            bar.categories.assign(levels.begin(), levels.end());
            bar.global_counts.assign(levels.size(), 0);
            bar.selected_counts.assign(levels.size(), 0);
            auto slot = [&](double v) {
                return static_cast<std::size_t>(std::lower_bound(bar.categories.begin(), bar.categories.end(), v) -
                                                bar.categories.begin());
            };
            for (std::size_t i = 0; i < n; ++i) ++bar.global_counts[slot(x(static_cast<Eigen::Index>(i), col))];
            for (auto r : rows) ++bar.selected_counts[slot(x(static_cast<Eigen::Index>(r), col))];
            out.bar_data.push_back(std::move(bar));
        } else {
            BoxData box;
            box.feature = raw_.static_columns[c].name;
            box.unit = raw_.static_columns[c].unit;
            box.global = box_stats(std::vector<double>(xn.col(col).begin(), xn.col(col).end()));
            if (!rows.empty()) {
                std::vector<double> values;
                for (auto r : rows) {
                    const double v = xn(static_cast<Eigen::Index>(r), col);
                    values.push_back(v);
                    box.selected_values.emplace_back(ids[r], v);
                }
                box.selected = box_stats(std::move(values));
            }
            out.box_data.push_back(std::move(box));
        }
    }

    auto& sd = out.series_data;
    const auto& y = raw_.dynamic_series;
    for (const auto& ym : raw_.time_axis) sd.time_axis.push_back(ym.str());
    const Vector global_mean = y.colwise().mean();
    sd.global_mean.assign(global_mean.begin(), global_mean.end());
    if (!rows.empty()) {
        std::vector<double> mean(static_cast<std::size_t>(y.cols()), 0.0);
        for (auto r : rows) {
            sd.node_ids.push_back(ids[r]);
            const auto row = y.row(static_cast<Eigen::Index>(r));
            sd.series.emplace_back(row.begin(), row.end());
            for (Eigen::Index t = 0; t < y.cols(); ++t) mean[static_cast<std::size_t>(t)] += row(t);
        }
        for (double& m : mean) m /= static_cast<double>(rows.size());
        sd.selected_mean = std::move(mean);
    }
    return out;
}

nlohmann::json to_json(const LinkedStats& stats) {
    nlohmann::json map_points = nlohmann::json::array();
    for (const auto& p : stats.map_points) map_points.push_back({{"node_id", p.id}, {"lon", p.lon}, {"lat", p.lat}});
    nlohmann::json bars = nlohmann::json::array();
    for (const auto& b : stats.bar_data) {
        bars.push_back({{"feature", b.feature},
                        {"categories", b.categories},
                        {"global_counts", b.global_counts},
                        {"selected_counts", b.selected_counts}});
    }
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : stats.box_data) {
        nlohmann::json values = nlohmann::json::array();
        for (auto [id, v] : b.selected_values) values.push_back({{"node_id", id}, {"value", v}});
        boxes.push_back({{"feature", b.feature},
                         {"unit", b.unit},
                         {"global", box_json(b.global)},
                         {"selected", b.selected ? box_json(*b.selected) : nlohmann::json(nullptr)},
                         {"selected_values", values}});
    }
    const auto& s = stats.series_data;
    nlohmann::json series = {{"time_axis", s.time_axis},
                             {"node_ids", s.node_ids},
                             {"series", s.series},
                             {"selected_mean", s.selected_mean ? nlohmann::json(*s.selected_mean) : nlohmann::json(nullptr)},
                             {"global_mean", s.global_mean}};
    return {{"map_points", map_points}, {"bar_data", bars}, {"box_data", boxes}, {"series_data", series}};
}

nlohmann::json ExplorerSession::stats(const SelectionRequest& selection) const {
    auto j = to_json(compute_linked_stats(selection));
    j["config_hash"] = config_hash_;
    j["source_model"] = fusion::display_name(selection.source_model);
    j["selection_size"] = selection.node_ids.size();
    return j;
}

nlohmann::json ExplorerSession::feature_values(NodeId id) const {
    const auto r = static_cast<Eigen::Index>(index_of(id));
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t c = 0; c < raw_.static_columns.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        features.push_back({{"name", raw_.static_columns[c].name},
                            {"unit", raw_.static_columns[c].unit},
                            {"value", raw_.static_features(r, col)},
                            {"normalized", display_.static_features(r, col)}});
    }
    const auto row = raw_.dynamic_series.row(r);
    const auto& coord = raw_.graph.coords()[static_cast<std::size_t>(r)];
    nlohmann::json out = {{"config_hash", config_hash_},
                          {"node_id", id},
                          {"lon", coord.lon},
                          {"lat", coord.lat},
                          {"static", features},
                          {"series", std::vector<double>(row.begin(), row.end())}};
    if (raw_.labels) out["label"] = (*raw_.labels)[static_cast<std::size_t>(r)];
    return out;
}

// ---------------------------------------------------------------- routing

HttpResponse handle(const ExplorerSession& session, const std::string& method, const std::string& path,
                    const std::string& body) {
    auto error = [&](int status, const std::string& message) {
        return HttpResponse{status, {{"config_hash", session.config_hash()}, {"error", message}}};
    };
    try {
        if (method == "GET" && path == "/session/meta") return {200, session.meta()};
        if (method == "GET" && path == "/projections") return {200, session.projections()};
        if (method == "GET" && path == "/map") return {200, session.map()};
        if (method == "POST" && path == "/stats") {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception& e) {
                return error(400, std::string("invalid JSON: ") + e.what());
            }
            return {200, session.stats(SelectionRequest::from_json(j))};
        }
        if (method == "GET" && path.rfind("/node/", 0) == 0) {
            const std::string text = path.substr(6);
            NodeId id = 0;
            const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
            if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
                return error(400, "invalid node id '" + text + "'");
            }
            return {200, session.feature_values(id)};
        }
        return error(404, "no route for " + method + " " + path);
    } catch (const RequestError& e) {
        return error(e.status(), e.what());
    } catch (const nlohmann::json::exception& e) {
        return error(400, e.what());
    }
}

struct HttpServer::Impl {
    explicit Impl(const ExplorerSession& s) : session(s) {}
    const ExplorerSession& session;
    httplib::Server server;
};

HttpServer::HttpServer(const ExplorerSession& session) : impl_(std::make_unique<Impl>(session)) {
    auto& srv = impl_->server;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    auto respond = [this](const httplib::Request& req, httplib::Response& res) {
        const auto out = handle(impl_->session, req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    srv.Get(".*", respond);
    srv.Post(".*", respond);
    srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void serve(const ExplorerSession& session, const std::string& host, int port) {
    HttpServer server(session);
    server.bind(host, port);
    server.listen();
}

}  // namespace urbanfuse::explorer
