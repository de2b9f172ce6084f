#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "urbanfuse/dataset.hpp"

namespace urbanfuse::synth {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

struct SynthConfig {
    int k_clusters = 12;
    int n_static = 11;
    int n_timesteps = 144;
    Interval static_mean_range{0.0, 10.0};
    double static_sigma = 1.0;
    int n_harmonics = 3;
    int max_frequency = 6;  // integer cycles per series, drawn from [1, max_frequency]
    Interval amplitude_range{1.0, 3.0};
    Interval offset_range{4.0, 8.0};
    double noise_sigma = 0.5;
    std::uint64_t seed = 7;
    YearMonth start{2006, 1};

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
SynthConfig load_config(const std::filesystem::path& path);

/// Geographic k-means of node coordinates; every cluster is non-empty.
std::vector<int> spatial_clusters(const StreetGraph& graph, int k, std::uint64_t seed);

/// Per-cluster Gaussian means drawn uniformly from static_mean_range.
Matrix cluster_static_means(const SynthConfig& config);
Matrix gen_static(const StreetGraph& graph, std::span<const int> labels, const SynthConfig& config);

struct Harmonic {
    double amplitude = 0.0;
    int frequency = 1;
    double phase = 0.0;
};

struct ClusterPattern {
    double offset = 0.0;
    std::vector<Harmonic> harmonics;

    /// b(t) = offset + sum_h A_h sin(2 pi f_h t / T + phi_h)
    double operator()(int t, int n_timesteps) const;
};

std::vector<ClusterPattern> cluster_patterns(const SynthConfig& config);
/// k x T matrix of the noise-free cluster base series.
Matrix base_series(const SynthConfig& config);
Matrix gen_dynamic(const StreetGraph& graph, std::span<const int> labels, const SynthConfig& config);

Dataset generate(const StreetGraph& graph, const SynthConfig& config);

/// Jittered rectangular street grid around a city-scale bounding box. A
/// fraction of edges is removed, never isolating a node.
StreetGraph grid_street_graph(int rows, int cols, std::uint64_t seed, double drop_fraction = 0.1);

/// Names of the eleven static features of the real-data schema.
const std::vector<std::string>& real_static_feature_names();

}  // namespace urbanfuse::synth
