#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "urbanfuse/metrics.hpp"
#include "urbanfuse/synthetic.hpp"

using namespace urbanfuse;

namespace {

StreetGraph points_graph(const std::vector<GeoPoint>& pts) {
    std::vector<NodeId> ids(pts.size());
    std::iota(ids.begin(), ids.end(), NodeId{1});
    return {ids, pts, {}};
}

// Every node in its own cluster's blob: three well separated Gaussian blobs.
StreetGraph blob_graph(std::vector<int>& truth) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 0.001);
    const GeoPoint centers[3] = {{-46.70, -23.60}, {-46.60, -23.50}, {-46.70, -23.45}};
    std::vector<GeoPoint> pts;
    truth.clear();
    for (int i = 0; i < 200; ++i) {
        const int c = i % 3;
        truth.push_back(c);
        pts.push_back({centers[c].lon + g(rng), centers[c].lat + g(rng)});
    }
    return points_graph(pts);
}

synth::SynthConfig small_config() {
    synth::SynthConfig c;
    c.k_clusters = 4;
    return c;
}

double pearson(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    const auto ca = (a.array() - a.mean()).matrix();
    const auto cb = (b.array() - b.mean()).matrix();
    return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

TEST_CASE("spatial clusters of a unit square pair up adjacent corners") {
    const auto g = points_graph({{0, 0}, {1, 0}, {0, 1.2}, {1, 1.2}});
    for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
        const auto labels = synth::spatial_clusters(g, 2, seed);
        CHECK(labels[0] == labels[1]);
        CHECK(labels[2] == labels[3]);
        CHECK(labels[0] != labels[2]);
    }
}

TEST_CASE("spatial clusters with k = n give singletons and zero inertia") {
    const auto g = points_graph({{0, 0}, {1, 0}, {0, 1}, {5, 5}, {2, 3}});
    const auto labels = synth::spatial_clusters(g, 5, 4);
    std::vector<int> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
    Matrix xy(5, 2);
    for (int i = 0; i < 5; ++i) xy.row(i) << g.coords()[static_cast<std::size_t>(i)].lon, g.coords()[static_cast<std::size_t>(i)].lat;
    CHECK(metrics::kmeans(xy, 5, 4).inertia == 0.0);
}

TEST_CASE("spatial clusters recover three separated blobs exactly") {
    std::vector<int> truth;
    const auto g = blob_graph(truth);
    for (std::uint64_t seed : {1u, 5u, 9u}) {
        CHECK(metrics::adjusted_rand_index(synth::spatial_clusters(g, 3, seed), truth) == 1.0);
    }
}

TEST_CASE("gen_static with zero sigma reproduces the cluster means") {
    auto c = small_config();
    c.static_sigma = 0.0;
    const auto g = synth::grid_street_graph(5, 6, 1);
    const auto labels = synth::spatial_clusters(g, c.k_clusters, c.seed);
    const auto x = synth::gen_static(g, labels, c);
    const auto mu = synth::cluster_static_means(c);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(x.row(static_cast<Eigen::Index>(i)) == mu.row(labels[i]));
}

TEST_CASE("gen_static is deterministic per seed") {
    const auto c = small_config();
    const auto g = synth::grid_street_graph(5, 6, 1);
    const auto labels = synth::spatial_clusters(g, c.k_clusters, c.seed);
    CHECK(synth::gen_static(g, labels, c) == synth::gen_static(g, labels, c));
}

TEST_CASE("gen_static sample means lie within 3 standard errors") {
    synth::SynthConfig c;
    c.k_clusters = 2;
    const auto g = synth::grid_street_graph(25, 20, 2);  // 500 nodes
    const std::vector<int> labels(g.size(), 1);
    const auto x = synth::gen_static(g, labels, c);
    const auto mu = synth::cluster_static_means(c);
    const double bound = 3.0 * c.static_sigma / std::sqrt(500.0);
    for (int j = 0; j < c.n_static; ++j) CHECK(std::abs(x.col(j).mean() - mu(1, j)) < bound);
}

TEST_CASE("gen_dynamic without noise gives one series per cluster") {
    auto c = small_config();
    c.noise_sigma = 0.0;
    const auto g = synth::grid_street_graph(5, 6, 1);
    const auto labels = synth::spatial_clusters(g, c.k_clusters, c.seed);
    const auto y = synth::gen_dynamic(g, labels, c);
    const auto base = synth::base_series(c);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(y.row(static_cast<Eigen::Index>(i)) == base.row(labels[i]).cwiseMax(0.0));
    }
}

TEST_CASE("gen_dynamic without harmonics is constant at the offset") {
    auto c = small_config();
    c.n_harmonics = 0;
    c.noise_sigma = 0.0;
    const auto g = synth::grid_street_graph(4, 4, 1);
    const auto labels = synth::spatial_clusters(g, c.k_clusters, c.seed);
    const auto y = synth::gen_dynamic(g, labels, c);
    const auto patterns = synth::cluster_patterns(c);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(y.row(static_cast<Eigen::Index>(i)).isConstant(patterns[static_cast<std::size_t>(labels[i])].offset));
    }
}

TEST_CASE("cluster mean series correlates with its generating pattern") {
    synth::SynthConfig c;
    c.k_clusters = 2;
    c.amplitude_range = {1.0, 3.0};
    c.noise_sigma = 0.25 * 1.0;  // <= 0.25 x smallest possible mean amplitude
    const auto g = synth::grid_street_graph(10, 12, 3);
    std::vector<int> labels(g.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 60 ? 0 : 1;
    const auto y = synth::gen_dynamic(g, labels, c);
    const auto base = synth::base_series(c);
    CHECK(pearson(y.topRows(60).colwise().mean(), base.row(0)) > 0.95);
    CHECK(pearson(y.bottomRows(60).colwise().mean(), base.row(1)) > 0.95);
}

TEST_CASE("generate has the documented shape and is non-negative") {
    auto c = small_config();
    const auto g = synth::grid_street_graph(4, 5, 1);  // 20 nodes
    const auto d = synth::generate(g, c);
    CHECK(d.num_nodes() == 20);
    CHECK(d.num_static() == 11);
    CHECK(d.num_timesteps() == 144);
    REQUIRE(d.labels.has_value());
    for (int l : *d.labels) CHECK((l >= 0 && l < 4));
    CHECK(d.dynamic_series.minCoeff() >= 0.0);
    CHECK(d.time_axis.front() == YearMonth{2006, 1});
    CHECK(d.time_axis.back() == YearMonth{2017, 12});
}

TEST_CASE("generate is deterministic and seed sensitive") {
    auto c = small_config();
    const auto g = synth::grid_street_graph(4, 5, 1);
    const auto a = synth::generate(g, c);
    const auto b = synth::generate(g, c);
    CHECK(a.static_features == b.static_features);
    CHECK(a.dynamic_series == b.dynamic_series);
    CHECK(*a.labels == *b.labels);
    c.seed = 8;
    CHECK(synth::generate(g, c).static_features != a.static_features);
}

TEST_CASE("widening the mean range separates cluster means further") {
    auto c = small_config();
    const auto narrow = synth::cluster_static_means(c);
    c.static_mean_range = {0.0, 20.0};
    const auto wide = synth::cluster_static_means(c);
    for (int a = 0; a < c.k_clusters; ++a)
        for (int b = a + 1; b < c.k_clusters; ++b)
            CHECK((wide.row(a) - wide.row(b)).norm() > (narrow.row(a) - narrow.row(b)).norm());
}

TEST_CASE("grid street graph keeps every node connected") {
    const auto g = synth::grid_street_graph(20, 25, 4, 0.1);
    CHECK(g.size() == 500);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.adjacency().degree(i) >= 1);
    const std::size_t full = 20 * 24 + 19 * 25;
    CHECK(g.edges().size() < full);
    CHECK(g.edges().size() >= full - full / 10);
}

TEST_CASE("synth config validation and JSON round-trip") {
    synth::SynthConfig c;
    c.k_clusters = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.amplitude_range = {2.0, 2.0};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.seed = 1234567890123ULL;
    c.noise_sigma = 0.125;
    const nlohmann::json j = c;
    const auto back = j.get<synth::SynthConfig>();
    CHECK(nlohmann::json(back) == j);
}
