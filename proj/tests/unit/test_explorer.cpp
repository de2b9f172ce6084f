#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"
#include "support.hpp"

#include "urbanfuse/csv.hpp"
#include "urbanfuse/explorer.hpp"

using namespace urbanfuse;
using namespace urbanfuse::explorer;
using testing::TempDir;

namespace {

// One toy session shared by all explorer tests, with two extra static
// columns: `stops` (integer, 11 levels) and `span` (continuous, 0..10).
struct Fixture {
    TempDir dir;
    std::filesystem::path root;

    Fixture() {
        root = pipeline::run_all(testing::toy_config(7), dir.path()).layout.root;
        const auto path = root / "dataset" / "static.csv";
        std::istringstream in(testing::read_file(path));
        std::ostringstream out;
        std::string line;
        std::getline(in, line);
        out << line << ",stops [count],span [km]\n";
        for (int i = 0; std::getline(in, line); ++i) {
            out << line << "," << (i % 11) << "," << csv::format(10.0 * (i % 7) / 6.0) << "\n";
        }
        testing::write_file(path, out.str());
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

const ExplorerSession& session() {
    static const ExplorerSession s = ExplorerSession::load(fixture().root);
    return s;
}

// Independent recomputation straight from the CSV text.
struct CsvView {
    std::vector<NodeId> ids;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> static_cols;
    std::vector<std::vector<double>> series;

    explicit CsvView(const std::filesystem::path& root) {
        const auto s = csv::read(root / "dataset" / "static.csv");
        columns.assign(s.header.begin() + 1, s.header.end());
        static_cols.resize(columns.size());
        for (const auto& row : s.rows) {
            ids.push_back(std::stoll(row[0]));
            for (std::size_t c = 0; c < columns.size(); ++c) static_cols[c].push_back(std::stod(row[c + 1]));
        }
        const auto d = csv::read(root / "dataset" / "dynamic.csv");
        for (const auto& row : d.rows) {
            std::vector<double> v;
            for (std::size_t c = 1; c < row.size(); ++c) v.push_back(std::stod(row[c]));
            series.push_back(v);
        }
    }
};

// Quantile by the 1-based "p = 1 + (n-1) q" rule (Hyndman-Fan type 7).
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double p = 1.0 + (static_cast<double>(v.size()) - 1.0) * q;
    const auto j = static_cast<std::size_t>(p);
    if (j >= v.size()) return v.back();
    return v[j - 1] + (p - static_cast<double>(j)) * (v[j] - v[j - 1]);
}

void check_box(const nlohmann::json& box, std::vector<double> v) {
    constexpr double tol = 1e-9;
    CHECK(box["count"] == v.size());
    CHECK(std::abs(box["min"].get<double>() - *std::min_element(v.begin(), v.end())) < tol);
    CHECK(std::abs(box["max"].get<double>() - *std::max_element(v.begin(), v.end())) < tol);
    CHECK(std::abs(box["q1"].get<double>() - quantile(v, 0.25)) < tol);
    CHECK(std::abs(box["median"].get<double>() - quantile(v, 0.5)) < tol);
    CHECK(std::abs(box["q3"].get<double>() - quantile(v, 0.75)) < tol);
    double mean = 0.0;
    for (double x : v) mean += x / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size());
    CHECK(std::abs(box["mean"].get<double>() - mean) < tol);
    CHECK(std::abs(box["std_dev"].get<double>() - std::sqrt(var)) < tol);
}

void check_stats(const nlohmann::json& j, const CsvView& csv, const std::vector<NodeId>& selection) {
    std::vector<std::size_t> rows;
    for (NodeId id : selection) rows.push_back(static_cast<std::size_t>(std::find(csv.ids.begin(), csv.ids.end(), id) - csv.ids.begin()));
    CHECK(j["selection_size"] == selection.size());
    CHECK(j["map_points"].size() == selection.size());

    std::size_t bar = 0, box = 0;
    for (std::size_t c = 0; c < csv.columns.size(); ++c) {
        const auto& col = csv.static_cols[c];
        if (csv.columns[c] == "stops [count]") {
            const auto& b = j["bar_data"][bar++];
            CHECK(b["feature"] == "stops [count]");
            CHECK(b["categories"].size() == 11);
            std::size_t total = 0;
            for (std::size_t level = 0; level < 11; ++level) {
                CHECK(b["categories"][level] == static_cast<double>(level));
                const auto global = static_cast<std::size_t>(std::count(col.begin(), col.end(), static_cast<double>(level)));
                std::size_t selected = 0;
                for (auto r : rows) selected += col[r] == static_cast<double>(level);
                CHECK(b["global_counts"][level] == global);
                CHECK(b["selected_counts"][level] == selected);
                total += b["selected_counts"][level].get<std::size_t>();
            }
            CHECK(total == selection.size());
            continue;
        }
        const double lo = *std::min_element(col.begin(), col.end());
        const double hi = *std::max_element(col.begin(), col.end());
        std::vector<double> scaled;
        for (double v : col) scaled.push_back((v - lo) / (hi - lo));
        const auto& b = j["box_data"][box++];
        check_box(b["global"], scaled);
        if (rows.empty()) {
            CHECK(b["selected"].is_null());
        } else {
            std::vector<double> sel;
            for (auto r : rows) sel.push_back(scaled[r]);
            check_box(b["selected"], sel);
        }
    }
    CHECK(bar == j["bar_data"].size());
    CHECK(box == j["box_data"].size());

    const auto& s = j["series_data"];
    const auto t = csv.series.front().size();
    for (std::size_t k = 0; k < t; ++k) {
        double g = 0.0;
        for (const auto& row : csv.series) g += row[k];
        CHECK(std::abs(s["global_mean"][k].get<double>() - g / static_cast<double>(csv.series.size())) < 1e-9);
        if (!rows.empty()) {
            double m = 0.0;
            for (auto r : rows) m += csv.series[r][k];
            CHECK(std::abs(s["selected_mean"][k].get<double>() - m / static_cast<double>(rows.size())) < 1e-9);
        }
    }
    CHECK(s["node_ids"].size() == selection.size());
}

}  // namespace

TEST_CASE("explorer serves the session projections unchanged") {
    const auto& s = session();
    const auto j = s.projections();
    const pipeline::SessionLayout layout{fixture().root};
    CHECK(j["projections"].size() == 5);
    for (auto kind : fusion::kAllKinds) {
        const auto m = csv::read_matrix(layout.projection(kind));
        CHECK(m.ids == j["node_ids"].get<std::vector<NodeId>>());
        const auto& p = j["projections"][std::string(fusion::display_name(kind))];
        for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
            CHECK(p["x"][static_cast<std::size_t>(i)].get<double>() == m.values(i, 0));
            CHECK(p["y"][static_cast<std::size_t>(i)].get<double>() == m.values(i, 1));
        }
    }
    const auto meta = s.meta();
    CHECK(meta["config_hash"] == testing::toy_config(7).hash());
    CHECK(meta["num_nodes"] == 200);
    CHECK(meta["has_labels"] == true);
    std::size_t discrete = 0;
    for (const auto& c : meta["static_columns"]) discrete += c["discrete"].get<bool>();
    CHECK(discrete == 1);
    CHECK(s.map()["edges"].size() == s.raw().graph.edges().size());
}

TEST_CASE("linked statistics match recomputation from the CSVs") {
    const CsvView csv(fixture().root);
    const auto& s = session();
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        auto ids = csv.ids;
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(1 + rng() % 40);
        SelectionRequest req;
        req.node_ids = ids;
        check_stats(s.stats(req), csv, ids);
    }
    check_stats(s.stats({}), csv, {});
}

TEST_CASE("selecting every node reproduces the global view") {
    const auto& s = session();
    SelectionRequest req;
    req.node_ids = s.raw().graph.ids();
    const auto stats = s.compute_linked_stats(req);
    for (const auto& bar : stats.bar_data) CHECK(bar.selected_counts == bar.global_counts);
    for (const auto& box : stats.box_data) {
        REQUIRE(box.selected);
        CHECK(box.selected->median == box.global.median);
        CHECK(box.selected->q1 == box.global.q1);
        CHECK(box.selected->q3 == box.global.q3);
        CHECK(std::abs(box.selected->mean - box.global.mean) < 1e-12);
    }
    const auto& sd = stats.series_data;
    for (std::size_t t = 0; t < sd.global_mean.size(); ++t)
        CHECK(std::abs((*sd.selected_mean)[t] - sd.global_mean[t]) < 1e-9);
}

TEST_CASE("single node selection collapses onto that node") {
    const auto& s = session();
    const NodeId id = s.raw().graph.ids()[17];
    SelectionRequest req;
    req.node_ids = {id};
    const auto stats = s.compute_linked_stats(req);
    CHECK(stats.map_points.size() == 1);
    CHECK(stats.series_data.series.size() == 1);
    CHECK(*stats.series_data.selected_mean == stats.series_data.series[0]);
    for (const auto& box : stats.box_data) {
        CHECK(box.selected->min == box.selected->max);
        CHECK(box.selected->std_dev == 0.0);
        CHECK(box.selected->outliers.empty());
    }
    for (const auto& bar : stats.bar_data) {
        std::size_t total = 0;
        for (auto c : bar.selected_counts) total += c;
        CHECK(total == 1);
    }
}

TEST_CASE("box statistics on small inputs") {
    const auto b = box_stats({1, 2, 3, 4, 100});
    CHECK(b.q1 == 2);
    CHECK(b.median == 3);
    CHECK(b.q3 == 4);
    CHECK(b.whisker_high == 4);
    CHECK(b.whisker_low == 1);
    CHECK(b.outliers == std::vector<double>{100});
    const auto e = box_stats({});
    CHECK(e.count == 0);
    const auto q = box_stats({0, 10});
    CHECK(q.q1 == 2.5);
    CHECK(q.q3 == 7.5);
}

TEST_CASE("node lookups invert the display normalisation") {
    const auto& s = session();
    const auto& ids = s.raw().graph.ids();
    // Row 3 has span = 10 * 3 / 6 = 5 km, the midpoint of 0..10.
    const auto j = s.feature_values(ids[3]);
    const auto& span = j["static"].back();
    CHECK(span["name"] == "span");
    CHECK(span["unit"] == "km");
    CHECK(span["value"].get<double>() == 5.0);
    CHECK(std::abs(span["normalized"].get<double>() - 0.5) < 1e-12);
    const auto meta = s.meta();
    const auto& meta_span = meta["static_columns"].back();
    CHECK(meta_span["min"].get<double>() + 0.5 * (meta_span["max"].get<double>() - meta_span["min"].get<double>()) == 5.0);
    CHECK(j["series"].size() == 36);
    CHECK(j.contains("label"));

    NodeId missing = 1;
    while (s.raw().graph.index_of(missing)) ++missing;
    CHECK_THROWS_AS(s.feature_values(missing), RequestError);
}

TEST_CASE("request routing") {
    const auto& s = session();
    const auto hash = s.config_hash();
    for (const char* path : {"/session/meta", "/projections", "/map"}) {
        const auto r = handle(s, "GET", path, "");
        CHECK(r.status == 200);
        CHECK(r.body["config_hash"] == hash);
    }
    const NodeId id = s.raw().graph.ids()[0];
    CHECK(handle(s, "GET", "/node/" + std::to_string(id), "").status == 200);
    CHECK(handle(s, "GET", "/node/999999", "").status == 404);
    CHECK(handle(s, "GET", "/node/abc", "").status == 400);
    CHECK(handle(s, "GET", "/nowhere", "").status == 404);
    CHECK(handle(s, "POST", "/stats", "{not json").status == 400);
    CHECK(handle(s, "POST", "/stats", R"({"node_ids": [999999]})").status == 404);
    CHECK(handle(s, "POST", "/stats", R"({"node_ids": "x"})").status == 400);
    CHECK(handle(s, "POST", "/stats", R"({"node_ids": [], "source_model": "M9"})").status == 400);
    const auto ok = handle(s, "POST", "/stats", nlohmann::json{{"node_ids", {id}}, {"source_model", "M4"}}.dump());
    CHECK(ok.status == 200);
    CHECK(ok.body["source_model"] == "M4");
    CHECK(ok.body["config_hash"] == hash);
    const auto err = handle(s, "GET", "/node/999999", "");
    CHECK(err.body["config_hash"] == hash);
    CHECK(err.body.contains("error"));
}

TEST_CASE("HTTP server answers over the loopback interface") {
    const auto& s = session();
    HttpServer server(s);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    const NodeId id = s.raw().graph.ids()[2];

    auto meta = client.Get("/session/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(meta->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(nlohmann::json::parse(meta->body)["config_hash"] == s.config_hash());

    auto stats = client.Post("/stats", nlohmann::json{{"node_ids", {id}}}.dump(), "application/json");
    REQUIRE(stats);
    CHECK(stats->status == 200);
    CHECK(nlohmann::json::parse(stats->body)["selection_size"] == 1);

    auto missing = client.Get("/node/999999");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto preflight = client.Options("/stats");
    REQUIRE(preflight);
    CHECK(preflight->status == 204);

    server.stop();
    t.join();
}

TEST_CASE("loading an incomplete session fails") {
    TempDir dir;
    CHECK_THROWS_AS(ExplorerSession::load(dir.path()), DataError);
}
