#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "urbanfuse/dataset.hpp"
#include "urbanfuse/fusion.hpp"

namespace urbanfuse::explorer {

/// Unknown node id or malformed request; maps to HTTP 404/400.
class RequestError : public std::runtime_error {
public:
    RequestError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

struct SelectionRequest {
    std::vector<NodeId> node_ids;  // empty clears the selection
    fusion::FusionKind source_model = fusion::FusionKind::m2_early;

    static SelectionRequest from_json(const nlohmann::json& j);
};

/// Type-7 quartiles with Tukey whiskers (furthest data within 1.5 IQR).
struct BoxStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;  // population
    std::size_t count = 0;
    std::vector<double> outliers;
};

BoxStats box_stats(std::vector<double> values);

struct BarData {
    std::string feature;
    std::vector<double> categories;  // distinct values over all nodes, ascending
    std::vector<std::size_t> global_counts;
    std::vector<std::size_t> selected_counts;
};

struct BoxData {
    std::string feature;
    std::string unit;
    BoxStats global;  // on min-max normalised values
    std::optional<BoxStats> selected;
    /// Per selected node: (node id, normalised value) for the dispersion strip.
    std::vector<std::pair<NodeId, double>> selected_values;
};

struct SeriesData {
    std::vector<std::string> time_axis;
    std::vector<NodeId> node_ids;
    std::vector<std::vector<double>> series;  // original units
    std::optional<std::vector<double>> selected_mean;
    std::vector<double> global_mean;
};

struct MapPoint {
    NodeId id;
    double lon;
    double lat;
};

struct LinkedStats {
    std::vector<MapPoint> map_points;
    std::vector<BarData> bar_data;
    std::vector<BoxData> box_data;
    SeriesData series_data;
};

/// Immutable view over a finished session directory.
class ExplorerSession {
public:
    /// Throws DataError if the session is incomplete.
    static ExplorerSession load(const std::filesystem::path& session_dir);

    const std::string& config_hash() const noexcept { return config_hash_; }
    const Dataset& raw() const noexcept { return raw_; }
    /// Per-column min-max view used by box plots and hover lookups.
    const Dataset& display() const noexcept { return display_; }
    const Matrix& projection(fusion::FusionKind kind) const { return projections_.at(kind); }
    /// Columns with only integer values and few distinct levels.
    const std::vector<bool>& discrete_columns() const noexcept { return discrete_; }

    nlohmann::json meta() const;
    nlohmann::json projections() const;
    nlohmann::json map() const;
    LinkedStats compute_linked_stats(const SelectionRequest& selection) const;
    nlohmann::json stats(const SelectionRequest& selection) const;
    /// Original-unit static features and series for one node.
    nlohmann::json feature_values(NodeId id) const;

private:
    std::size_t index_of(NodeId id) const;

    std::string config_hash_;
    Dataset raw_;
    Dataset display_;
    std::map<fusion::FusionKind, Matrix> projections_;
    std::map<fusion::FusionKind, std::vector<int>> clusters_;
    std::vector<bool> discrete_;
};

nlohmann::json to_json(const LinkedStats& stats);

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

/// Routes a request without touching the network. Every body carries
/// `config_hash`.
HttpResponse handle(const ExplorerSession& session, const std::string& method, const std::string& path,
                    const std::string& body);

/// HTTP front end over `handle`, with CORS headers.
class HttpServer {
public:
    explicit HttpServer(const ExplorerSession& session);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds to `port` (0 picks a free one); returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called from another thread.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// bind + listen.
void serve(const ExplorerSession& session, const std::string& host, int port);

}  // namespace urbanfuse::explorer
