#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "urbanfuse/common.hpp"

namespace urbanfuse::tsne {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    double init_sigma = 1e-4;
    /// Bisection stops once |achieved perplexity - target| is below this.
    double perplexity_tolerance = 1e-5;
    int kl_every = 50;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TsneConfig& c);
void from_json(const nlohmann::json& j, TsneConfig& c);

struct Affinities {
    Matrix conditional;                    // row-stochastic P_{j|i}, zero diagonal
    std::vector<double> beta;              // 1 / (2 sigma_i^2)
    std::vector<double> achieved_perplexity;
};

/// Per-point Gaussian bandwidths found by bisection so that each
/// conditional row has the requested perplexity.
Affinities conditional_affinities(const Matrix& points, double perplexity, double tolerance = 1e-5);

/// (P + P^T) / (2n), entries summing to one.
Matrix joint_affinities(const Matrix& conditional);

/// KL(P || Q) for a 2-D layout under the Student-t kernel.
double kl_divergence(const Matrix& joint, const Matrix& layout);

struct TsneResult {
    Matrix coords;  // n x 2
    /// (iteration, KL) pairs; iteration 0 is the initial layout.
    std::vector<std::pair<int, double>> kl_trace;
    std::vector<double> achieved_perplexity;
};

/// Exact O(n^2) t-SNE. Throws std::invalid_argument if n < 10, if the
/// embedding has non-finite entries, if perplexity >= n / 3 or if there are
/// fewer than 250 iterations.
TsneResult project(const Matrix& embedding, const TsneConfig& config);

}  // namespace urbanfuse::tsne
