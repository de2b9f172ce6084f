#include "urbanfuse/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace urbanfuse::tsne {

void to_json(nlohmann::json& j, const TsneConfig& c) {
    j = nlohmann::json{{"perplexity", c.perplexity},
                       {"iterations", c.iterations},
                       {"early_exaggeration", c.early_exaggeration},
                       {"exaggeration_iterations", c.exaggeration_iterations},
                       {"learning_rate", c.learning_rate},
                       {"initial_momentum", c.initial_momentum},
                       {"final_momentum", c.final_momentum},
                       {"momentum_switch", c.momentum_switch},
                       {"init_sigma", c.init_sigma},
                       {"perplexity_tolerance", c.perplexity_tolerance},
                       {"kl_every", c.kl_every},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TsneConfig& c) {
    TsneConfig d;
    c.perplexity = j.value("perplexity", d.perplexity);
    c.iterations = j.value("iterations", d.iterations);
    c.early_exaggeration = j.value("early_exaggeration", d.early_exaggeration);
    c.exaggeration_iterations = j.value("exaggeration_iterations", d.exaggeration_iterations);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.initial_momentum = j.value("initial_momentum", d.initial_momentum);
    c.final_momentum = j.value("final_momentum", d.final_momentum);
    c.momentum_switch = j.value("momentum_switch", d.momentum_switch);
    c.init_sigma = j.value("init_sigma", d.init_sigma);
    c.perplexity_tolerance = j.value("perplexity_tolerance", d.perplexity_tolerance);
    c.kl_every = j.value("kl_every", d.kl_every);
    c.seed = j.value("seed", d.seed);
}

namespace {

Matrix squared_distances(const Matrix& x) {
    const Vector norms = x.rowwise().squaredNorm();
    Matrix d = (-2.0 * x * x.transpose()).colwise() + norms;
    d.rowwise() += norms.transpose();
    d = d.cwiseMax(0.0);
    d.diagonal().setZero();
    return d;
}

}  // namespace

Affinities conditional_affinities(const Matrix& points, double perplexity, double tolerance) {
    const Eigen::Index n = points.rows();
    const Matrix d2 = squared_distances(points);
    const double target = std::log(perplexity);
    Affinities out;
    out.conditional = Matrix::Zero(n, n);
    out.beta.assign(static_cast<std::size_t>(n), 1.0);
    out.achieved_perplexity.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double d_min = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) d_min = std::min(d_min, d2(i, j));

        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        double sum = 0.0;
        for (int iter = 0; iter < 200; ++iter) {
            // Shifting by the nearest distance keeps exp() away from underflow;
            // it cancels in the normalisation.
            sum = 0.0;
            double weighted = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto k = static_cast<std::size_t>(j);
                if (j == i) {
                    row[k] = 0.0;
                    continue;
                }
                const double shifted = d2(i, j) - d_min;
                row[k] = std::exp(-beta * shifted);
                sum += row[k];
                weighted += shifted * row[k];
            }
            entropy = std::log(sum) + beta * weighted / sum;
            if (std::abs(std::exp(entropy) - perplexity) < tolerance) break;
            if (entropy > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        for (Eigen::Index j = 0; j < n; ++j) out.conditional(i, j) = row[static_cast<std::size_t>(j)] / sum;
        out.beta[static_cast<std::size_t>(i)] = beta;
        out.achieved_perplexity[static_cast<std::size_t>(i)] = std::exp(entropy);
    }
    return out;
}

Matrix joint_affinities(const Matrix& conditional) {
    Matrix p = conditional + conditional.transpose();
    p /= p.sum();
    return p;
}

double kl_divergence(const Matrix& joint, const Matrix& layout) {
    const Eigen::Index n = layout.rows();
    const Matrix num = (1.0 + squared_distances(layout).array()).inverse().matrix();
    const double z = num.sum() - static_cast<double>(n);  // diagonal entries equal 1
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = joint(i, j);
            if (p <= 0.0) continue;
            const double q = std::max(num(i, j) / z, std::numeric_limits<double>::min());
            kl += p * std::log(p / q);
        }
    }
    return kl;
}

TsneResult project(const Matrix& embedding, const TsneConfig& config) {
    const Eigen::Index n = embedding.rows();
    if (n < 10) throw std::invalid_argument("t-SNE: need at least 10 points, got " + std::to_string(n));
    if (!embedding.allFinite()) throw std::invalid_argument("t-SNE: embedding has non-finite entries");
    if (!(config.perplexity > 0.0) || 3.0 * config.perplexity >= static_cast<double>(n)) {
        throw std::invalid_argument("t-SNE: perplexity " + std::to_string(config.perplexity) +
                                    " infeasible for " + std::to_string(n) + " points (must be < n/3)");
    }
    if (config.iterations < config.exaggeration_iterations || config.iterations < 250) {
        throw std::invalid_argument("t-SNE: iterations must be >= 250 and cover the exaggeration phase");
    }

    auto affinities = conditional_affinities(embedding, config.perplexity, config.perplexity_tolerance);
    const Matrix p = joint_affinities(affinities.conditional);
    affinities.conditional.resize(0, 0);

    TsneResult result;
    result.achieved_perplexity = std::move(affinities.achieved_perplexity);

    auto rng = rng_stream(config.seed, streams::kTsneInit);
    std::normal_distribution<double> gauss(0.0, config.init_sigma);
    Matrix y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = gauss(rng);
        y(i, 1) = gauss(rng);
    }
    result.kl_trace.emplace_back(0, kl_divergence(p, y));

    Matrix update = Matrix::Zero(n, 2);
    Matrix gains = Matrix::Ones(n, 2);
    Matrix num(n, n);
    Matrix grad(n, 2);
    for (int iter = 1; iter <= config.iterations; ++iter) {
        const double exaggeration = iter <= config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum = iter <= config.momentum_switch ? config.initial_momentum : config.final_momentum;

        // Column-wise over the symmetric matrices so every inner loop is
        // contiguous.
        for (Eigen::Index i = 0; i < n; ++i) {
            auto v = num.col(i).array();
            v = 1.0 / (1.0 + (y.col(0).array() - y(i, 0)).square() + (y.col(1).array() - y(i, 1)).square());
            v(i) = 0.0;
        }
        const double z = num.sum();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto v = num.col(i).array();
            const Eigen::ArrayXd w = (exaggeration * p.col(i).array() - v / z) * v;
            grad(i, 0) = 4.0 * (w * (y(i, 0) - y.col(0).array())).sum();
            grad(i, 1) = 4.0 * (w * (y(i, 1) - y.col(1).array())).sum();
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0.0) == (update(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                update(i, c) = momentum * update(i, c) - config.learning_rate * gains(i, c) * grad(i, c);
            }
        }
        y += update;
        y.rowwise() -= y.colwise().mean();

        if ((config.kl_every > 0 && iter % config.kl_every == 0) || iter == config.iterations) {
            result.kl_trace.emplace_back(iter, kl_divergence(p, y));
        }
    }
    result.coords = std::move(y);
    return result;
}

}  // namespace urbanfuse::tsne
