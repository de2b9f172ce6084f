#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "urbanfuse/common.hpp"

namespace urbanfuse {

struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;
};

/// Compressed neighbor lists. Row i holds the indices adjacent to node i in
/// ascending order.
class Adjacency {
public:
    Adjacency() = default;
    Adjacency(std::size_t n, std::span<const std::pair<int, int>> edges);

    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::span<const int> neighbors(std::size_t i) const {
        return {targets_.data() + offsets_[i], targets_.data() + offsets_[i + 1]};
    }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
    bool is_symmetric() const;

private:
    std::vector<std::size_t> offsets_;
    std::vector<int> targets_;
};

/// Undirected street graph with geolocated nodes. Node ids are arbitrary
/// integers; internally nodes are addressed by their position in `ids()`.
class StreetGraph {
public:
    StreetGraph() = default;
    /// Throws DataError on duplicate ids, self-loops, duplicate edges or
    /// dangling endpoints.
    StreetGraph(std::vector<NodeId> ids, std::vector<GeoPoint> coords,
                const std::vector<std::pair<NodeId, NodeId>>& edges);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<NodeId>& ids() const noexcept { return ids_; }
    const std::vector<GeoPoint>& coords() const noexcept { return coords_; }
    /// Index pairs (a < b), sorted.
    const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
    const Adjacency& adjacency() const noexcept { return adjacency_; }
    std::optional<std::size_t> index_of(NodeId id) const;

private:
    std::vector<NodeId> ids_;
    std::vector<GeoPoint> coords_;
    std::vector<std::pair<int, int>> edges_;
    Adjacency adjacency_;
    std::unordered_map<NodeId, std::size_t> index_;
};

struct YearMonth {
    int year = 0;
    int month = 1;

    auto operator<=>(const YearMonth&) const = default;
    int ordinal() const noexcept { return year * 12 + (month - 1); }
    static YearMonth from_ordinal(int ordinal) { return {ordinal / 12, ordinal % 12 + 1}; }
    std::string str() const;
    /// Parses "YYYY-MM".
    static std::optional<YearMonth> parse(std::string_view text);
};

struct FeatureColumn {
    std::string name;
    std::string unit;  // empty when the header carries none
};

enum class NormScheme { none, min_max, z_score };

std::string to_string(NormScheme scheme);
NormScheme norm_scheme_from_string(std::string_view text);

/// Affine map back to original units: original = normalized * scale + offset.
/// Static columns are mapped independently; the dynamic matrix shares one
/// scale so that series shapes are preserved.
struct Normalization {
    NormScheme scheme = NormScheme::none;
    std::vector<double> static_offset;
    std::vector<double> static_scale;
    double dynamic_offset = 0.0;
    double dynamic_scale = 1.0;
    std::vector<std::size_t> constant_columns;  // left at 0, reported as warnings
};

struct Dataset {
    StreetGraph graph;
    Matrix static_features;  // n x p
    std::vector<FeatureColumn> static_columns;
    Matrix dynamic_series;  // n x T
    std::vector<YearMonth> time_axis;
    std::optional<std::vector<int>> labels;
    Normalization normalization;

    std::size_t num_nodes() const noexcept { return graph.size(); }
    std::size_t num_static() const noexcept { return static_columns.size(); }
    std::size_t num_timesteps() const noexcept { return time_axis.size(); }

    /// Checks every invariant; throws DataError naming the offending locus.
    void validate() const;
};

struct DatasetPaths {
    std::filesystem::path nodes;
    std::filesystem::path edges;
    std::filesystem::path static_features;
    std::filesystem::path dynamic_series;
    std::optional<std::filesystem::path> labels;

    /// Standard file names inside `dir`; labels.csv is picked up if present.
    static DatasetPaths in_directory(const std::filesystem::path& dir);
};

Dataset load_dataset(const DatasetPaths& paths);
/// Writes the raw CSV files (and labels.csv when labels are present).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

StreetGraph load_graph(const std::filesystem::path& nodes, const std::filesystem::path& edges);
void save_graph(const StreetGraph& graph, const std::filesystem::path& dir);

Dataset normalize_features(const Dataset& dataset, NormScheme scheme);
Dataset denormalize_features(const Dataset& dataset);

struct IncidentRecord {
    double lon = 0.0;
    double lat = 0.0;
    int year = 0;
    int month = 1;
    int day = 1;
};

struct TimeRange {
    YearMonth first;
    YearMonth last;  // inclusive

    int num_bins() const noexcept { return last.ordinal() - first.ordinal() + 1; }
    bool contains(const IncidentRecord& r) const noexcept {
        const YearMonth ym{r.year, r.month};
        return first <= ym && ym <= last;
    }
    std::vector<YearMonth> axis() const;
};

struct IncidentAssignment {
    Matrix counts;  // n x T
    std::vector<YearMonth> time_axis;
    std::size_t assigned = 0;
    std::size_t skipped_out_of_range = 0;
    std::size_t skipped_invalid = 0;  // non-finite coordinates or bad month
};

/// Planar coordinates in meters, equirectangular about a reference point.
struct LocalProjection {
    double lon0 = 0.0;
    double lat0 = 0.0;
    double cos_lat0 = 1.0;

    static LocalProjection around_centroid(const StreetGraph& graph);
    Eigen::Vector2d operator()(double lon, double lat) const;
};

/// Maps each in-range incident to the nearest street edge (point-to-segment
/// distance in the local plane) and then to the closer endpoint of that edge.
/// Ties resolve to the lowest node id.
IncidentAssignment assign_incidents(const StreetGraph& graph,
                                    std::span<const IncidentRecord> incidents,
                                    const TimeRange& range);

/// incidents.csv: `lon,lat,date` with date as YYYY-MM-DD.
std::vector<IncidentRecord> load_incidents(const std::filesystem::path& path);

/// Labels file `node_id,cluster`, rows in node order.
void save_labels(const StreetGraph& graph, std::span<const int> labels,
                 const std::filesystem::path& path);

}  // namespace urbanfuse
