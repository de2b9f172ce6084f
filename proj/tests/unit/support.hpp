#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "urbanfuse/dataset.hpp"
#include "urbanfuse/gae.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("urbanfuse-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline urbanfuse::Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    urbanfuse::Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

// 6-node graph: a 5-cycle with a chord plus one isolated node.
inline urbanfuse::StreetGraph six_node_graph() {
    std::vector<urbanfuse::NodeId> ids{10, 11, 12, 13, 14, 15};
    std::vector<urbanfuse::GeoPoint> coords;
    for (int i = 0; i < 6; ++i) coords.push_back({-46.6 + 0.001 * i, -23.5 + 0.0007 * (i % 3)});
    return {ids, coords, {{10, 11}, {11, 12}, {12, 13}, {13, 14}, {14, 10}, {10, 12}}};
}

// Small random dataset on `graph` with p static columns and T time bins.
inline urbanfuse::Dataset random_dataset(const urbanfuse::StreetGraph& graph, int p, int t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    urbanfuse::Dataset d;
    d.graph = graph;
    const int n = static_cast<int>(graph.size());
    d.static_features = random_matrix(n, p, rng, 0.0, 1.0);
    d.dynamic_series = random_matrix(n, t, rng, 0.0, 1.0);
    for (int c = 0; c < p; ++c) d.static_columns.push_back({"f" + std::to_string(c), ""});
    for (int m = 0; m < t; ++m) d.time_axis.push_back(urbanfuse::YearMonth::from_ordinal(2010 * 12 + m));
    return d;
}

// Largest relative error between the analytic gradient of `objective` and
// central finite differences, over every scalar parameter. Relative error
// uses max(|analytic|, |numeric|, floor) as the denominator.
// Moves parameters off ReLU kinks (zero-initialised biases can leave a
// pre-activation at exactly 0, where central differences are meaningless).
inline void jitter_parameters(urbanfuse::gae::Objective& objective, std::uint64_t seed, double scale = 1e-2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto& p : objective.parameters())
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += n(rng);
}

inline double max_gradient_error(urbanfuse::gae::Objective& objective, double h = 1e-5, double floor = 1e-6,
                                 std::string* worst_name = nullptr) {
    auto params = objective.parameters();
    for (auto& p : params) p.grad.setZero();
    objective.loss_and_grad();
    std::vector<urbanfuse::Matrix> analytic;
    for (auto& p : params) analytic.push_back(p.grad);
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k].value;
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double saved = value.data()[i];
            value.data()[i] = saved + h;
            const double up = objective.loss();
            value.data()[i] = saved - h;
            const double down = objective.loss();
            value.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k].data()[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (err > worst) {
                worst = err;
                if (worst_name) *worst_name = params[k].name;
            }
        }
    }
    return worst;
}

}  // namespace testing
