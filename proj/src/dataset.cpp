#include "urbanfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "urbanfuse/csv.hpp"

namespace urbanfuse {

// ---------------------------------------------------------------- graph

Adjacency::Adjacency(std::size_t n, std::span<const std::pair<int, int>> edges) {
    std::vector<std::size_t> degree(n, 0);
    for (auto [a, b] : edges) {
        ++degree[static_cast<std::size_t>(a)];
        ++degree[static_cast<std::size_t>(b)];
    }
    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
    targets_.resize(offsets_[n]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (auto [a, b] : edges) {
        targets_[fill[static_cast<std::size_t>(a)]++] = b;
        targets_[fill[static_cast<std::size_t>(b)]++] = a;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::sort(targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                  targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
    }
}

bool Adjacency::is_symmetric() const {
    for (std::size_t i = 0; i < size(); ++i) {
        for (int j : neighbors(i)) {
            auto back = neighbors(static_cast<std::size_t>(j));
            if (!std::binary_search(back.begin(), back.end(), static_cast<int>(i))) return false;
        }
    }
    return true;
}

StreetGraph::StreetGraph(std::vector<NodeId> ids, std::vector<GeoPoint> coords,
                         const std::vector<std::pair<NodeId, NodeId>>& edges)
    : ids_(std::move(ids)), coords_(std::move(coords)) {
    if (ids_.size() != coords_.size()) {
        throw DataError("graph: " + std::to_string(ids_.size()) + " node ids but " +
                        std::to_string(coords_.size()) + " coordinates");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw DataError("graph: duplicate node id " + std::to_string(ids_[i]));
        }
        if (!std::isfinite(coords_[i].lon) || !std::isfinite(coords_[i].lat)) {
            throw DataError("graph: node " + std::to_string(ids_[i]) + " has non-finite coordinates");
        }
    }
    std::set<std::pair<int, int>> seen;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [src, dst] = edges[e];
        const auto a = index_of(src);
        const auto b = index_of(dst);
        if (!a || !b) {
            throw DataError("graph: edge #" + std::to_string(e) + " (" + std::to_string(src) + "," +
                            std::to_string(dst) + ") references undeclared node " +
                            std::to_string(!a ? src : dst));
        }
        if (*a == *b) {
            throw DataError("graph: edge #" + std::to_string(e) + " is a self-loop on node " +
                            std::to_string(src));
        }
        const int ia = static_cast<int>(*a);
        const int ib = static_cast<int>(*b);
        const std::pair<int, int> key{std::min(ia, ib), std::max(ia, ib)};
        if (!seen.insert(key).second) {
            throw DataError("graph: edge #" + std::to_string(e) + " duplicates undirected edge (" +
                            std::to_string(src) + "," + std::to_string(dst) + ")");
        }
    }
    edges_.assign(seen.begin(), seen.end());
    adjacency_ = Adjacency(ids_.size(), edges_);
}

std::optional<std::size_t> StreetGraph::index_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------- time axis

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
}

std::optional<YearMonth> YearMonth::parse(std::string_view text) {
    if (text.size() != 7 || text[4] != '-') return std::nullopt;
    int year = 0;
    int month = 0;
    for (int i = 0; i < 4; ++i) {
        if (text[i] < '0' || text[i] > '9') return std::nullopt;
        year = year * 10 + (text[i] - '0');
    }
    for (int i = 5; i < 7; ++i) {
        if (text[i] < '0' || text[i] > '9') return std::nullopt;
        month = month * 10 + (text[i] - '0');
    }
    if (month < 1 || month > 12) return std::nullopt;
    return YearMonth{year, month};
}

std::vector<YearMonth> TimeRange::axis() const {
    std::vector<YearMonth> out;
    for (int o = first.ordinal(); o <= last.ordinal(); ++o) out.push_back(YearMonth::from_ordinal(o));
    return out;
}

// ---------------------------------------------------------------- validation

void Dataset::validate() const {
    const auto n = static_cast<Eigen::Index>(graph.size());
    if (static_features.rows() != n) {
        throw DataError("dataset: static matrix has " + std::to_string(static_features.rows()) +
                        " rows but the graph has " + std::to_string(n) + " nodes");
    }
    if (dynamic_series.rows() != n) {
        throw DataError("dataset: dynamic matrix has " + std::to_string(dynamic_series.rows()) +
                        " rows but the graph has " + std::to_string(n) + " nodes");
    }
    if (static_features.cols() != static_cast<Eigen::Index>(static_columns.size())) {
        throw DataError("dataset: static column names do not match the static matrix width");
    }
    if (dynamic_series.cols() != static_cast<Eigen::Index>(time_axis.size())) {
        throw DataError("dataset: time axis length does not match the dynamic matrix width");
    }
    for (std::size_t t = 1; t < time_axis.size(); ++t) {
        if (!(time_axis[t - 1] < time_axis[t])) {
            throw DataError("dataset: time axis not strictly increasing at " + time_axis[t].str());
        }
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < static_features.cols(); ++c) {
            if (!std::isfinite(static_features(r, c))) {
                throw DataError("dataset: non-finite static value at node " +
                                std::to_string(graph.ids()[static_cast<std::size_t>(r)]) +
                                ", column '" + static_columns[static_cast<std::size_t>(c)].name + "'");
            }
        }
        for (Eigen::Index c = 0; c < dynamic_series.cols(); ++c) {
            const double v = dynamic_series(r, c);
            const double raw = v * normalization.dynamic_scale + normalization.dynamic_offset;
            if (!std::isfinite(v) || raw < -1e-9 * std::max(1.0, std::abs(normalization.dynamic_scale))) {
                throw DataError("dataset: invalid dynamic value at node " +
                                std::to_string(graph.ids()[static_cast<std::size_t>(r)]) + ", bin " +
                                time_axis[static_cast<std::size_t>(c)].str());
            }
        }
    }
    if (labels) {
        if (labels->size() != graph.size()) {
            throw DataError("dataset: " + std::to_string(labels->size()) + " labels for " +
                            std::to_string(graph.size()) + " nodes");
        }
        for (std::size_t i = 0; i < labels->size(); ++i) {
            if ((*labels)[i] < 0) {
                throw DataError("dataset: negative cluster label at node " +
                                std::to_string(graph.ids()[i]));
            }
        }
    }
}

// ---------------------------------------------------------------- I/O

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
    DatasetPaths p{dir / "nodes.csv", dir / "edges.csv", dir / "static.csv", dir / "dynamic.csv", {}};
    if (std::filesystem::exists(dir / "labels.csv")) p.labels = dir / "labels.csv";
    return p;
}

namespace {

FeatureColumn parse_feature_header(const std::string& text) {
    const auto open = text.rfind('[');
    if (open != std::string::npos && !text.empty() && text.back() == ']') {
        std::string name = text.substr(0, open);
        while (!name.empty() && name.back() == ' ') name.pop_back();
        return {name, text.substr(open + 1, text.size() - open - 2)};
    }
    return {text, {}};
}

std::string feature_header(const FeatureColumn& c) {
    return c.unit.empty() ? c.name : c.name + " [" + c.unit + "]";
}

// Row index (in graph order) for each data row of `table`, checking that
// every node appears exactly once.
std::vector<std::size_t> rows_by_node(const csv::Table& table, const StreetGraph& graph) {
    if (table.header.empty() || table.header[0] != "node_id") {
        throw DataError(table.source.string() + ":1: first column must be 'node_id'");
    }
    if (table.rows.size() != graph.size()) {
        throw DataError(table.source.string() + ": " + std::to_string(table.rows.size()) +
                        " rows but nodes file declares " + std::to_string(graph.size()) + " nodes");
    }
    std::vector<std::size_t> order(graph.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const NodeId id = csv::parse_int(table.rows[r][0], table, r, 0);
        const auto idx = graph.index_of(id);
        if (!idx) throw DataError(table.locus(r) + ": unknown node id " + std::to_string(id));
        if (order[*idx] != std::numeric_limits<std::size_t>::max()) {
            throw DataError(table.locus(r) + ": node id " + std::to_string(id) + " repeated");
        }
        order[*idx] = r;
    }
    return order;
}

}  // namespace

StreetGraph load_graph(const std::filesystem::path& nodes_path, const std::filesystem::path& edges_path) {
    const csv::Table nodes = csv::read(nodes_path);
    const auto c_id = nodes.column("node_id");
    const auto c_lon = nodes.column("lon");
    const auto c_lat = nodes.column("lat");
    std::vector<NodeId> ids;
    std::vector<GeoPoint> coords;
    std::set<NodeId> declared;
    for (std::size_t r = 0; r < nodes.rows.size(); ++r) {
        const NodeId id = csv::parse_int(nodes.rows[r][c_id], nodes, r, c_id);
        if (!declared.insert(id).second) {
            throw DataError(nodes.locus(r) + ": duplicate node id " + std::to_string(id));
        }
        ids.push_back(id);
        coords.push_back({csv::parse_double(nodes.rows[r][c_lon], nodes, r, c_lon),
                          csv::parse_double(nodes.rows[r][c_lat], nodes, r, c_lat)});
    }
    const csv::Table edges = csv::read(edges_path);
    const auto c_src = edges.column("src");
    const auto c_dst = edges.column("dst");
    std::vector<std::pair<NodeId, NodeId>> pairs;
    std::set<std::pair<NodeId, NodeId>> seen;
    for (std::size_t r = 0; r < edges.rows.size(); ++r) {
        const NodeId a = csv::parse_int(edges.rows[r][c_src], edges, r, c_src);
        const NodeId b = csv::parse_int(edges.rows[r][c_dst], edges, r, c_dst);
        for (NodeId end : {a, b}) {
            if (!declared.count(end)) {
                throw DataError(edges.locus(r) + ": dangling edge endpoint " + std::to_string(end) +
                                " is not declared in " + nodes_path.filename().string());
            }
        }
        if (a == b) throw DataError(edges.locus(r) + ": self-loop on node " + std::to_string(a));
        if (!seen.insert(std::minmax(a, b)).second) {
            throw DataError(edges.locus(r) + ": duplicate undirected edge (" + std::to_string(a) + "," +
                            std::to_string(b) + ")");
        }
        pairs.emplace_back(a, b);
    }
    return StreetGraph(std::move(ids), std::move(coords), pairs);
}

Dataset load_dataset(const DatasetPaths& paths) {
    Dataset ds;
    ds.graph = load_graph(paths.nodes, paths.edges);
    const auto n = ds.graph.size();

    const csv::Table stat = csv::read(paths.static_features);
    const csv::Table dyn = csv::read(paths.dynamic_series);
    if (stat.rows.size() != dyn.rows.size()) {
        throw DataError("node count mismatch: " + paths.static_features.filename().string() + " has " +
                        std::to_string(stat.rows.size()) + " rows, " +
                        paths.dynamic_series.filename().string() + " has " +
                        std::to_string(dyn.rows.size()) + " rows");
    }

    const auto stat_order = rows_by_node(stat, ds.graph);
    for (std::size_t c = 1; c < stat.header.size(); ++c) {
        ds.static_columns.push_back(parse_feature_header(stat.header[c]));
    }
    const auto p = ds.static_columns.size();
    ds.static_features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = stat_order[i];
        for (std::size_t c = 0; c < p; ++c) {
            ds.static_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                csv::parse_double(stat.rows[r][c + 1], stat, r, c + 1);
        }
    }

    const auto dyn_order = rows_by_node(dyn, ds.graph);
    for (std::size_t c = 1; c < dyn.header.size(); ++c) {
        auto ym = YearMonth::parse(dyn.header[c]);
        if (!ym) {
            throw DataError(dyn.source.string() + ":1: column " + std::to_string(c + 1) +
                            ": expected YYYY-MM header, found '" + dyn.header[c] + "'");
        }
        if (!ds.time_axis.empty() && !(ds.time_axis.back() < *ym)) {
            throw DataError(dyn.source.string() + ":1: time header '" + dyn.header[c] +
                            "' is not strictly increasing");
        }
        ds.time_axis.push_back(*ym);
    }
    const auto T = ds.time_axis.size();
    ds.dynamic_series.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = dyn_order[i];
        for (std::size_t c = 0; c < T; ++c) {
            const double v = csv::parse_double(dyn.rows[r][c + 1], dyn, r, c + 1);
            if (v < 0) {
                throw DataError(dyn.locus(r) + ": column '" + dyn.header[c + 1] +
                                "': negative count " + csv::format(v));
            }
            ds.dynamic_series(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
        }
    }

    if (paths.labels) {
        const csv::Table lab = csv::read(*paths.labels);
        const auto order = rows_by_node(lab, ds.graph);
        const auto c_cluster = lab.column("cluster");
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = csv::parse_int(lab.rows[order[i]][c_cluster], lab, order[i], c_cluster);
            if (v < 0) throw DataError(lab.locus(order[i]) + ": negative cluster id");
            labels[i] = static_cast<int>(v);
        }
        ds.labels = std::move(labels);
    }
    ds.validate();
    return ds;
}

void save_graph(const StreetGraph& graph, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "nodes.csv", std::ios::binary);
        out << "node_id,lon,lat\n";
        for (std::size_t i = 0; i < graph.size(); ++i) {
            out << graph.ids()[i] << ',' << csv::format(graph.coords()[i].lon) << ','
                << csv::format(graph.coords()[i].lat) << '\n';
        }
    }
    std::ofstream out(dir / "edges.csv", std::ios::binary);
    out << "src,dst\n";
    for (auto [a, b] : graph.edges()) {
        out << graph.ids()[static_cast<std::size_t>(a)] << ',' << graph.ids()[static_cast<std::size_t>(b)]
            << '\n';
    }
}

void save_labels(const StreetGraph& graph, std::span<const int> labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    out << "node_id,cluster\n";
    for (std::size_t i = 0; i < graph.size(); ++i) out << graph.ids()[i] << ',' << labels[i] << '\n';
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    const Dataset raw = dataset.normalization.scheme == NormScheme::none
                            ? dataset
                            : denormalize_features(dataset);
    save_graph(raw.graph, dir);
    std::vector<std::string> header{"node_id"};
    for (const auto& c : raw.static_columns) header.push_back(feature_header(c));
    csv::write_matrix(dir / "static.csv", header, raw.graph.ids(), raw.static_features);
    header.assign(1, "node_id");
    for (const auto& t : raw.time_axis) header.push_back(t.str());
    csv::write_matrix(dir / "dynamic.csv", header, raw.graph.ids(), raw.dynamic_series);
    if (raw.labels) save_labels(raw.graph, *raw.labels, dir / "labels.csv");
}

// ---------------------------------------------------------------- normalization

std::string to_string(NormScheme scheme) {
    switch (scheme) {
        case NormScheme::none: return "none";
        case NormScheme::min_max: return "min-max";
        case NormScheme::z_score: return "z-score";
    }
    return "none";
}

NormScheme norm_scheme_from_string(std::string_view text) {
    if (text == "none") return NormScheme::none;
    if (text == "min-max" || text == "minmax" || text == "min_max") return NormScheme::min_max;
    if (text == "z-score" || text == "zscore" || text == "z_score") return NormScheme::z_score;
    throw std::invalid_argument("unknown normalization scheme '" + std::string(text) + "'");
}

namespace {

// (offset, scale) for one block of values; scale 0 flags a constant block.
std::pair<double, double> fit(const Eigen::Ref<const Matrix>& values, NormScheme scheme) {
    if (values.size() == 0 || scheme == NormScheme::none) return {0.0, 1.0};
    if (scheme == NormScheme::min_max) {
        const double lo = values.minCoeff();
        return {lo, values.maxCoeff() - lo};
    }
    const double mean = values.mean();
    const double var = (values.array() - mean).square().mean();
    return {mean, std::sqrt(var)};
}

}  // namespace

Dataset normalize_features(const Dataset& dataset, NormScheme scheme) {
    Dataset out = dataset.normalization.scheme == NormScheme::none ? dataset : denormalize_features(dataset);
    Normalization norm;
    norm.scheme = scheme;
    const auto p = out.static_features.cols();
    for (Eigen::Index c = 0; c < p; ++c) {
        auto [offset, scale] = fit(out.static_features.col(c), scheme);
        if (scheme != NormScheme::none && scale == 0.0) {
            norm.constant_columns.push_back(static_cast<std::size_t>(c));
            out.static_features.col(c).setZero();
            scale = 1.0;
        } else if (scheme != NormScheme::none) {
            out.static_features.col(c) = (out.static_features.col(c).array() - offset) / scale;
        }
        norm.static_offset.push_back(offset);
        norm.static_scale.push_back(scale);
    }
    auto [offset, scale] = fit(out.dynamic_series, scheme);
    if (scheme != NormScheme::none) {
        if (scale == 0.0) {
            out.dynamic_series.setZero();
            scale = 1.0;
        } else {
            out.dynamic_series = (out.dynamic_series.array() - offset) / scale;
        }
    }
    norm.dynamic_offset = offset;
    norm.dynamic_scale = scale;
    out.normalization = std::move(norm);
    return out;
}

Dataset denormalize_features(const Dataset& dataset) {
    Dataset out = dataset;
    const auto& norm = dataset.normalization;
    if (norm.scheme == NormScheme::none) return out;
    for (Eigen::Index c = 0; c < out.static_features.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        out.static_features.col(c) = out.static_features.col(c).array() * norm.static_scale[k] + norm.static_offset[k];
    }
    out.dynamic_series = out.dynamic_series.array() * norm.dynamic_scale + norm.dynamic_offset;
    out.normalization = Normalization{};
    return out;
}

// ---------------------------------------------------------------- incidents

LocalProjection LocalProjection::around_centroid(const StreetGraph& graph) {
    LocalProjection proj;
    if (graph.size() == 0) return proj;
    for (const auto& c : graph.coords()) {
        proj.lon0 += c.lon;
        proj.lat0 += c.lat;
    }
    proj.lon0 /= static_cast<double>(graph.size());
    proj.lat0 /= static_cast<double>(graph.size());
    proj.cos_lat0 = std::cos(proj.lat0 * std::numbers::pi / 180.0);
    return proj;
}

Eigen::Vector2d LocalProjection::operator()(double lon, double lat) const {
    constexpr double kEarthRadius = 6371008.8;
    constexpr double kRad = std::numbers::pi / 180.0;
    return {(lon - lon0) * kRad * cos_lat0 * kEarthRadius, (lat - lat0) * kRad * kEarthRadius};
}

namespace {

double segment_dist2(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (a + t * ab - p).squaredNorm();
}

// Uniform bucket grid over edge bounding boxes.
class EdgeGrid {
public:
    EdgeGrid(const std::vector<Eigen::Vector2d>& pts, const std::vector<std::pair<int, int>>& edges)
        : pts_(pts), edges_(edges) {
        lo_ = hi_ = pts_[static_cast<std::size_t>(edges_[0].first)];
        double total = 0.0;
        for (auto [a, b] : edges_) {
            const auto& pa = pts_[static_cast<std::size_t>(a)];
            const auto& pb = pts_[static_cast<std::size_t>(b)];
            lo_ = lo_.cwiseMin(pa).cwiseMin(pb);
            hi_ = hi_.cwiseMax(pa).cwiseMax(pb);
            total += (pa - pb).norm();
        }
        const Eigen::Vector2d extent = hi_ - lo_;
        cell_ = std::max(total / static_cast<double>(edges_.size()), 1e-6);
        // Keep the grid within a few cells per edge.
        const double max_cells = 4.0 * static_cast<double>(edges_.size()) + 16.0;
        while ((extent.x() / cell_ + 1) * (extent.y() / cell_ + 1) > max_cells) cell_ *= 2.0;
        nx_ = static_cast<int>(extent.x() / cell_) + 1;
        ny_ = static_cast<int>(extent.y() / cell_) + 1;
        buckets_.resize(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_));
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const auto& pa = pts_[static_cast<std::size_t>(edges_[e].first)];
            const auto& pb = pts_[static_cast<std::size_t>(edges_[e].second)];
            const auto [x0, y0] = cell_of(pa.cwiseMin(pb));
            const auto [x1, y1] = cell_of(pa.cwiseMax(pb));
            for (int x = x0; x <= x1; ++x)
                for (int y = y0; y <= y1; ++y) buckets_[index(x, y)].push_back(e);
        }
        stamp_.assign(edges_.size(), 0);
    }

    // Returns all edge indices at minimal distance from p.
    std::vector<std::size_t> nearest(const Eigen::Vector2d& p) {
        ++epoch_;
        const auto [cx, cy] = raw_cell(p);
        const int r_max = std::max({std::abs(cx), std::abs(cx - nx_ + 1), std::abs(cy), std::abs(cy - ny_ + 1)});
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> hits;
        for (int r = 0; r <= r_max; ++r) {
            for (int x = cx - r; x <= cx + r; ++x) {
                for (int y = cy - r; y <= cy + r; ++y) {
                    if (std::max(std::abs(x - cx), std::abs(y - cy)) != r) continue;
                    if (x < 0 || y < 0 || x >= nx_ || y >= ny_) continue;
                    for (std::size_t e : buckets_[index(x, y)]) {
                        if (stamp_[e] == epoch_) continue;
                        stamp_[e] = epoch_;
                        const double d = segment_dist2(p, pts_[static_cast<std::size_t>(edges_[e].first)],
                                                       pts_[static_cast<std::size_t>(edges_[e].second)]);
                        if (d < best) {
                            best = d;
                            hits.assign(1, e);
                        } else if (d == best) {
                            hits.push_back(e);
                        }
                    }
                }
            }
            // Anything outside the scanned block lies at least r cells away.
            const double reach = static_cast<double>(r) * cell_;
            if (!hits.empty() && best < reach * reach) break;
        }
        return hits;
    }

private:
    std::pair<int, int> raw_cell(const Eigen::Vector2d& p) const {
        return {static_cast<int>(std::floor((p.x() - lo_.x()) / cell_)),
                static_cast<int>(std::floor((p.y() - lo_.y()) / cell_))};
    }
    std::pair<int, int> cell_of(const Eigen::Vector2d& p) const {
        auto [x, y] = raw_cell(p);
        return {std::clamp(x, 0, nx_ - 1), std::clamp(y, 0, ny_ - 1)};
    }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(ny_) + static_cast<std::size_t>(y);
    }

    const std::vector<Eigen::Vector2d>& pts_;
    const std::vector<std::pair<int, int>>& edges_;
    Eigen::Vector2d lo_, hi_;
    double cell_ = 1.0;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
    std::vector<std::uint64_t> stamp_;
    std::uint64_t epoch_ = 0;
};

}  // namespace

IncidentAssignment assign_incidents(const StreetGraph& graph, std::span<const IncidentRecord> incidents,
                                    const TimeRange& range) {
    if (range.num_bins() <= 0) throw std::invalid_argument("assign_incidents: empty time range");
    if (graph.edges().empty()) throw std::invalid_argument("assign_incidents: graph has no edges");

    const auto proj = LocalProjection::around_centroid(graph);
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(graph.size());
    for (const auto& c : graph.coords()) pts.push_back(proj(c.lon, c.lat));

    const auto& ids = graph.ids();
    const auto& edges = graph.edges();
    EdgeGrid grid(pts, edges);

    IncidentAssignment out;
    out.time_axis = range.axis();
    out.counts = Matrix::Zero(static_cast<Eigen::Index>(graph.size()), range.num_bins());
    for (const auto& inc : incidents) {
        if (!std::isfinite(inc.lon) || !std::isfinite(inc.lat) || inc.month < 1 || inc.month > 12) {
            ++out.skipped_invalid;
            continue;
        }
        if (!range.contains(inc)) {
            ++out.skipped_out_of_range;
            continue;
        }
        const Eigen::Vector2d p = proj(inc.lon, inc.lat);
        const auto hits = grid.nearest(p);
        // Equidistant edges: the one whose (lower, higher) endpoint ids are smallest.
        auto edge_key = [&](std::size_t e) {
            return std::minmax(ids[static_cast<std::size_t>(edges[e].first)],
                               ids[static_cast<std::size_t>(edges[e].second)]);
        };
        const std::size_t e = *std::min_element(hits.begin(), hits.end(),
                                                [&](auto l, auto r) { return edge_key(l) < edge_key(r); });
        const auto a = static_cast<std::size_t>(edges[e].first);
        const auto b = static_cast<std::size_t>(edges[e].second);
        const double da = (pts[a] - p).squaredNorm();
        const double db = (pts[b] - p).squaredNorm();
        std::size_t node = a;
        if (db < da || (db == da && ids[b] < ids[a])) node = b;
        const int bin = YearMonth{inc.year, inc.month}.ordinal() - range.first.ordinal();
        out.counts(static_cast<Eigen::Index>(node), bin) += 1.0;
        ++out.assigned;
    }
    return out;
}

std::vector<IncidentRecord> load_incidents(const std::filesystem::path& path) {
    const csv::Table table = csv::read(path);
    const auto c_lon = table.column("lon");
    const auto c_lat = table.column("lat");
    const auto c_date = table.column("date");
    std::vector<IncidentRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& date = table.rows[r][c_date];
        IncidentRecord rec;
        rec.lon = csv::parse_double(table.rows[r][c_lon], table, r, c_lon);
        rec.lat = csv::parse_double(table.rows[r][c_lat], table, r, c_lat);
        if (date.size() < 7 || std::sscanf(date.c_str(), "%d-%d-%d", &rec.year, &rec.month, &rec.day) < 2 ||
            rec.month < 1 || rec.month > 12) {
            throw DataError(table.locus(r) + ": cannot parse date '" + date + "'");
        }
        out.push_back(rec);
    }
    return out;
}

}  // namespace urbanfuse
