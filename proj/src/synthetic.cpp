#include "urbanfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "urbanfuse/metrics.hpp"

namespace urbanfuse::synth {

void SynthConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("synth config: " + what); };
    if (k_clusters < 2) fail("k_clusters must be >= 2");
    if (n_static < 1) fail("n_static must be >= 1");
    if (n_timesteps < 1) fail("n_timesteps must be >= 1");
    if (!(static_mean_range.lo < static_mean_range.hi)) fail("static_mean_range is degenerate");
    if (!(static_sigma >= 0.0)) fail("static_sigma must be >= 0");
    if (n_harmonics < 0) fail("n_harmonics must be >= 0");
    if (max_frequency < 1) fail("max_frequency must be >= 1");
    if (!(amplitude_range.lo < amplitude_range.hi)) fail("amplitude_range is degenerate");
    if (!(offset_range.lo < offset_range.hi)) fail("offset_range is degenerate");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
    if (start.month < 1 || start.month > 12) fail("start month out of range");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"k_clusters", c.k_clusters},
                       {"n_static", c.n_static},
                       {"n_timesteps", c.n_timesteps},
                       {"static_mean_range", {c.static_mean_range.lo, c.static_mean_range.hi}},
                       {"static_sigma", c.static_sigma},
                       {"n_harmonics", c.n_harmonics},
                       {"max_frequency", c.max_frequency},
                       {"amplitude_range", {c.amplitude_range.lo, c.amplitude_range.hi}},
                       {"offset_range", {c.offset_range.lo, c.offset_range.hi}},
                       {"noise_sigma", c.noise_sigma},
                       {"seed", c.seed},
                       {"start", c.start.str()}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    SynthConfig d;
    auto interval = [&](const char* key, Interval fallback) {
        if (!j.contains(key)) return fallback;
        const auto& v = j.at(key);
        if (!v.is_array() || v.size() != 2) throw std::invalid_argument(std::string("synth config: ") + key + " must be [lo, hi]");
        return Interval{v[0].get<double>(), v[1].get<double>()};
    };
    c.k_clusters = j.value("k_clusters", d.k_clusters);
    c.n_static = j.value("n_static", d.n_static);
    c.n_timesteps = j.value("n_timesteps", d.n_timesteps);
    c.static_mean_range = interval("static_mean_range", d.static_mean_range);
    c.static_sigma = j.value("static_sigma", d.static_sigma);
    c.n_harmonics = j.value("n_harmonics", d.n_harmonics);
    c.max_frequency = j.value("max_frequency", d.max_frequency);
    c.amplitude_range = interval("amplitude_range", d.amplitude_range);
    c.offset_range = interval("offset_range", d.offset_range);
    c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    c.seed = j.value("seed", d.seed);
    c.start = d.start;
    if (j.contains("start")) {
        auto ym = YearMonth::parse(j.at("start").get<std::string>());
        if (!ym) throw std::invalid_argument("synth config: start must be YYYY-MM");
        c.start = *ym;
    }
    c.validate();
}

SynthConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open config");
    return nlohmann::json::parse(in).get<SynthConfig>();
}

std::vector<int> spatial_clusters(const StreetGraph& graph, int k, std::uint64_t seed) {
    Matrix xy(static_cast<Eigen::Index>(graph.size()), 2);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        xy(static_cast<Eigen::Index>(i), 0) = graph.coords()[i].lon;
        xy(static_cast<Eigen::Index>(i), 1) = graph.coords()[i].lat;
    }
    return metrics::kmeans(xy, k, splitmix64(seed ^ streams::kSpatialKmeans)).labels;
}

Matrix cluster_static_means(const SynthConfig& config) {
    auto rng = rng_stream(config.seed, streams::kStaticMeans);
    std::uniform_real_distribution<double> mean(config.static_mean_range.lo, config.static_mean_range.hi);
    Matrix mu(config.k_clusters, config.n_static);
    for (int c = 0; c < config.k_clusters; ++c)
        for (int j = 0; j < config.n_static; ++j) mu(c, j) = mean(rng);
    return mu;
}

Matrix gen_static(const StreetGraph& graph, std::span<const int> labels, const SynthConfig& config) {
    config.validate();
    const Matrix mu = cluster_static_means(config);
    Matrix out(static_cast<Eigen::Index>(graph.size()), config.n_static);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        auto rng = rng_stream(config.seed, streams::kStaticNoise, static_cast<std::uint64_t>(graph.ids()[i]));
        const auto r = static_cast<Eigen::Index>(i);
        for (int j = 0; j < config.n_static; ++j) {
            out(r, j) = mu(labels[i], j) + config.static_sigma * noise(rng);
        }
    }
    return out;
}

double ClusterPattern::operator()(int t, int n_timesteps) const {
    double v = offset;
    for (const auto& h : harmonics) {
        v += h.amplitude * std::sin(2.0 * std::numbers::pi * h.frequency * t / n_timesteps + h.phase);
    }
    return v;
}

std::vector<ClusterPattern> cluster_patterns(const SynthConfig& config) {
    std::vector<ClusterPattern> patterns;
    std::uniform_real_distribution<double> offset(config.offset_range.lo, config.offset_range.hi);
    std::uniform_real_distribution<double> amplitude(config.amplitude_range.lo, config.amplitude_range.hi);
    std::uniform_int_distribution<int> frequency(1, config.max_frequency);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int c = 0; c < config.k_clusters; ++c) {
        auto rng = rng_stream(config.seed, streams::kClusterPattern, static_cast<std::uint64_t>(c));
        ClusterPattern p;
        p.offset = offset(rng);
        for (int h = 0; h < config.n_harmonics; ++h) {
            Harmonic harm;
            harm.amplitude = amplitude(rng);
            harm.frequency = frequency(rng);
            harm.phase = phase(rng);
            p.harmonics.push_back(harm);
        }
        patterns.push_back(std::move(p));
    }
    return patterns;
}

Matrix base_series(const SynthConfig& config) {
    const auto patterns = cluster_patterns(config);
    Matrix out(config.k_clusters, config.n_timesteps);
    for (int c = 0; c < config.k_clusters; ++c)
        for (int t = 0; t < config.n_timesteps; ++t) out(c, t) = patterns[static_cast<std::size_t>(c)](t, config.n_timesteps);
    return out;
}

Matrix gen_dynamic(const StreetGraph& graph, std::span<const int> labels, const SynthConfig& config) {
    config.validate();
    const Matrix base = base_series(config);
    Matrix out(static_cast<Eigen::Index>(graph.size()), config.n_timesteps);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        auto rng = rng_stream(config.seed, streams::kDynamicNoise, static_cast<std::uint64_t>(graph.ids()[i]));
        const auto r = static_cast<Eigen::Index>(i);
        for (int t = 0; t < config.n_timesteps; ++t) {
            // Counts cannot be negative.
            out(r, t) = std::max(0.0, base(labels[i], t) + config.noise_sigma * noise(rng));
        }
    }
    return out;
}

Dataset generate(const StreetGraph& graph, const SynthConfig& config) {
    config.validate();
    if (static_cast<std::size_t>(config.k_clusters) > graph.size()) {
        throw std::invalid_argument("synth: more clusters than graph nodes");
    }
    Dataset ds;
    ds.graph = graph;
    auto labels = spatial_clusters(graph, config.k_clusters, config.seed);
    ds.static_features = gen_static(graph, labels, config);
    ds.dynamic_series = gen_dynamic(graph, labels, config);
    for (int j = 0; j < config.n_static; ++j) {
        char name[16];
        std::snprintf(name, sizeof(name), "s%02d", j + 1);
        ds.static_columns.push_back({name, {}});
    }
    for (int t = 0; t < config.n_timesteps; ++t) {
        ds.time_axis.push_back(YearMonth::from_ordinal(config.start.ordinal() + t));
    }
    ds.labels = std::move(labels);
    ds.validate();
    return ds;
}

StreetGraph grid_street_graph(int rows, int cols, std::uint64_t seed, double drop_fraction) {
    if (rows < 1 || cols < 1 || rows * cols < 2) throw std::invalid_argument("grid graph: need at least two nodes");
    constexpr double kLon0 = -46.70;
    constexpr double kLat0 = -23.62;
    constexpr double kStep = 0.0009;  // roughly 100 m
    auto rng = rng_stream(seed, streams::kGraph);
    std::uniform_real_distribution<double> jitter(-0.3 * kStep, 0.3 * kStep);
    std::vector<NodeId> ids;
    std::vector<GeoPoint> coords;
    auto id_of = [&](int r, int c) { return static_cast<NodeId>(r * cols + c + 1); };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            ids.push_back(id_of(r, c));
            coords.push_back({kLon0 + c * kStep + jitter(rng), kLat0 + r * kStep + jitter(rng)});
        }
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) edges.emplace_back(id_of(r, c), id_of(r, c + 1));
            if (r + 1 < rows) edges.emplace_back(id_of(r, c), id_of(r + 1, c));
        }
    }
    std::vector<int> degree(static_cast<std::size_t>(rows * cols), 0);
    for (auto [a, b] : edges) {
        ++degree[static_cast<std::size_t>(a - 1)];
        ++degree[static_cast<std::size_t>(b - 1)];
    }
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto to_drop = static_cast<std::size_t>(drop_fraction * static_cast<double>(edges.size()));
    std::vector<bool> dropped(edges.size(), false);
    std::size_t count = 0;
    for (std::size_t e : order) {
        if (count == to_drop) break;
        auto [a, b] = edges[e];
        if (degree[static_cast<std::size_t>(a - 1)] <= 2 || degree[static_cast<std::size_t>(b - 1)] <= 2) continue;
        dropped[e] = true;
        --degree[static_cast<std::size_t>(a - 1)];
        --degree[static_cast<std::size_t>(b - 1)];
        ++count;
    }
    std::vector<std::pair<NodeId, NodeId>> kept;
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (!dropped[e]) kept.push_back(edges[e]);
    return StreetGraph(std::move(ids), std::move(coords), kept);
}

const std::vector<std::string>& real_static_feature_names() {
    static const std::vector<std::string> names{
        "income_household_avg", "income_householder_avg", "unemployment_rate", "literacy_7_15",
        "share_age_under_18",   "share_age_18_65",        "share_age_over_65", "bus_stops_200m",
        "metro_stations_200m",  "train_stations_200m",    "favela_within_500m"};
    return names;
}

}  // namespace urbanfuse::synth
