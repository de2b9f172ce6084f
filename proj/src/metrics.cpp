#include "urbanfuse/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace urbanfuse::metrics {

double dist_euclidean(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("dist_euclidean: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double dist_dtw(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dist_dtw: empty series");
    // Rolling single row over b; cost(i, j) = |a_i - b_j| + min(up, left, diag).
    const std::size_t m = b.size();
    std::vector<double> row(m);
    row[0] = std::abs(a[0] - b[0]);
    for (std::size_t j = 1; j < m; ++j) row[j] = row[j - 1] + std::abs(a[0] - b[j]);
    for (std::size_t i = 1; i < a.size(); ++i) {
        const double ai = a[i];
        double diag = row[0];
        row[0] += std::abs(ai - b[0]);
        for (std::size_t j = 1; j < m; ++j) {
            const double up = row[j];
            const double best = std::min(std::min(up, row[j - 1]), diag);
            diag = up;
            row[j] = best + std::abs(ai - b[j]);
        }
    }
    return row[m - 1];
}

double cohesion(std::span<const int> members, const IndexDistance& dist) {
    const std::size_t n = members.size();
    if (n == 0) throw std::invalid_argument("cohesion: empty cluster");
    if (n == 1) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) sum += dist(members[i], members[j]);
    }
    // Each unordered pair stands for two ordered pairs.
    return 2.0 * sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double separation(std::span<const int> cluster_k, std::span<const int> cluster_l, const IndexDistance& dist) {
    if (cluster_k.empty() || cluster_l.empty()) throw std::invalid_argument("separation: empty cluster");
    double best = std::numeric_limits<double>::infinity();
    for (int i : cluster_k) {
        for (int j : cluster_l) best = std::min(best, dist(i, j));
    }
    return best;
}

double silhouette_term(double a, double b) {
    const double denom = std::max(a, b);
    return denom == 0.0 ? 0.0 : (b - a) / denom;
}

double silhouette_from_parts(double a_k, double a_l, double b_kl) {
    return 0.5 * (silhouette_term(a_k, b_kl) + silhouette_term(a_l, b_kl));
}

double silhouette_pair(std::span<const int> cluster_k, std::span<const int> cluster_l, const IndexDistance& dist) {
    return silhouette_from_parts(cohesion(cluster_k, dist), cohesion(cluster_l, dist),
                                 separation(cluster_k, cluster_l, dist));
}

// ---------------------------------------------------------------- k-means

namespace {

struct LloydRun {
    std::vector<int> labels;
    Matrix centers;
    double inertia = 0.0;
    std::vector<double> history;
};

Matrix plus_plus_init(const Matrix& x, int k, std::mt19937_64& rng) {
    const Eigen::Index n = x.rows();
    Matrix centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = x.row(pick(rng));
    Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = unif(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target && d2(i) > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centers.row(c) = x.row(chosen);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

LloydRun lloyd(const Matrix& x, Matrix centers, int max_iterations) {
    const Eigen::Index n = x.rows();
    const int k = static_cast<int>(centers.rows());
    LloydRun run;
    run.labels.assign(static_cast<std::size_t>(n), -1);
    Vector best_d2(n);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = (x.row(i) - centers.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (x.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            best_d2(i) = bd;
            inertia += bd;
            auto& label = run.labels[static_cast<std::size_t>(i)];
            if (label != best) {
                label = best;
                changed = true;
            }
        }
        run.history.push_back(inertia);
        run.inertia = inertia;
        if (!changed) break;

        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = run.labels[static_cast<std::size_t>(i)];
            sums.row(c) += x.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: move its center onto the worst-served point.
            Eigen::Index far = 0;
            best_d2.maxCoeff(&far);
            centers.row(c) = x.row(far);
            best_d2(far) = 0.0;
        }
    }
    run.centers = std::move(centers);
    return run;
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, const KmeansOptions& options) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > points.rows()) {
        throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds point count " +
                                    std::to_string(points.rows()));
    }
    std::optional<LloydRun> best;
    for (int r = 0; r < std::max(1, options.restarts); ++r) {
        auto rng = rng_stream(seed, streams::kKmeansRestart, static_cast<std::uint64_t>(r));
        LloydRun run = lloyd(points, plus_plus_init(points, k, rng), options.max_iterations);
        if (!best || run.inertia < best->inertia) best = std::move(run);
    }
    ClusterAssignment out;
    out.labels = std::move(best->labels);
    out.k = k;
    out.seed = seed;
    out.inertia = best->inertia;
    out.centers = std::move(best->centers);
    out.inertia_history = std::move(best->history);
    return out;
}

std::vector<std::vector<int>> members_by_cluster(std::span<const int> labels, int k) {
    std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || c >= k) {
            throw std::invalid_argument("label " + std::to_string(c) + " outside [0, " + std::to_string(k) + ")");
        }
        members[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
    }
    return members;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: size mismatch");
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    auto choose2 = [](double x) { return x * (x - 1) / 2; };
    double index = 0, sum_rows = 0, sum_cols = 0;
    for (const auto& [_, v] : table) index += choose2(v);
    for (const auto& [_, v] : rows) sum_rows += choose2(v);
    for (const auto& [_, v] : cols) sum_cols += choose2(v);
    const double expected = sum_rows * sum_cols / choose2(n);
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

int separated_clusters(const Matrix& layout, std::span<const int> labels, int neighbors, double purity) {
    const Eigen::Index n = layout.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("separated_clusters: size mismatch");
    const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<int> agree(static_cast<std::size_t>(k), 0), size(static_cast<std::size_t>(k), 0);
    const auto m = static_cast<std::size_t>(std::min<Eigen::Index>(neighbors, n - 1));
    std::vector<std::pair<double, int>> d(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            d[static_cast<std::size_t>(j)] = {j == i ? std::numeric_limits<double>::infinity()
                                                     : (layout.row(i) - layout.row(j)).squaredNorm(),
                                              static_cast<int>(j)};
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
        const int own = labels[static_cast<std::size_t>(i)];
        std::size_t same = 0;
        for (std::size_t t = 0; t < m; ++t) same += labels[static_cast<std::size_t>(d[t].second)] == own;
        ++size[static_cast<std::size_t>(own)];
        if (2 * same >= m) ++agree[static_cast<std::size_t>(own)];
    }
    int separated = 0;
    for (int c = 0; c < k; ++c) {
        const auto s = static_cast<std::size_t>(c);
        if (size[s] > 0 && static_cast<double>(agree[s]) >= purity * static_cast<double>(size[s])) ++separated;
    }
    return separated;
}

QuadrantSummary summarize_quadrants(std::span<const SilhouettePair> pairs) {
    QuadrantSummary q;
    for (const auto& p : pairs) {
        const bool right = p.s_static > 0.0;
        const bool top = p.s_dynamic > 0.0;
        if (top && right) ++q.top_right;
        else if (top) ++q.top_left;
        else if (right) ++q.bottom_right;
        else ++q.bottom_left;
    }
    return q;
}

// ---------------------------------------------------------------- evaluation

PairwiseCache::PairwiseCache(std::size_t n, std::function<double(int, int)> compute)
    : n_(n), compute_(std::move(compute)), values_(n * (n + 1) / 2, std::numeric_limits<double>::quiet_NaN()) {}

double PairwiseCache::operator()(int i, int j) {
    if (i == j) return 0.0;
    auto lo = static_cast<std::size_t>(std::min(i, j));
    auto hi = static_cast<std::size_t>(std::max(i, j));
    double& slot = values_[hi * (hi + 1) / 2 + lo];
    if (std::isnan(slot)) {
        slot = compute_(static_cast<int>(lo), static_cast<int>(hi));
        ++computed_;
    }
    return slot;
}

namespace {
std::span<const double> row_span(const Matrix& m, int i) {
    // Matrices passed here are transposed copies: one column per node.
    return {m.data() + static_cast<std::ptrdiff_t>(i) * m.rows(), static_cast<std::size_t>(m.rows())};
}
}  // namespace

OriginalSpaceDistances::OriginalSpaceDistances(const Dataset& dataset)
    : static_dist(dataset.num_nodes(), [this](int i, int j) {
          return dist_euclidean(row_span(static_rows_, i), row_span(static_rows_, j));
      }),
      dynamic_dist(dataset.num_nodes(), [this](int i, int j) {
          return dist_dtw(row_span(dynamic_rows_, i), row_span(dynamic_rows_, j));
      }),
      static_rows_(dataset.static_features.transpose()),
      dynamic_rows_(dataset.dynamic_series.transpose()) {}

std::vector<SilhouettePair> evaluate_labels(std::span<const int> labels, int k, OriginalSpaceDistances& distances,
                                            std::uint64_t seed, std::optional<std::size_t> subsample_cap) {
    auto members = members_by_cluster(labels, k);
    for (int c = 0; c < k; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        if (m.empty()) throw DataError("evaluation: cluster " + std::to_string(c) + " is empty");
        if (subsample_cap && m.size() > *subsample_cap) {
            if (*subsample_cap == 0) {
                throw DataError("evaluation: subsampling empties cluster " + std::to_string(c));
            }
            auto rng = rng_stream(seed, streams::kSubsample, static_cast<std::uint64_t>(c));
            std::shuffle(m.begin(), m.end(), rng);
            m.resize(*subsample_cap);
            std::sort(m.begin(), m.end());
        }
    }
    IndexDistance d_static = [&](int i, int j) { return distances.static_dist(i, j); };
    IndexDistance d_dynamic = [&](int i, int j) { return distances.dynamic_dist(i, j); };

    std::vector<double> a_static, a_dynamic;
    for (const auto& m : members) {
        a_static.push_back(cohesion(m, d_static));
        a_dynamic.push_back(cohesion(m, d_dynamic));
    }
    std::vector<SilhouettePair> pairs;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            const auto& ma = members[static_cast<std::size_t>(a)];
            const auto& mb = members[static_cast<std::size_t>(b)];
            SilhouettePair p;
            p.cluster_a = a;
            p.cluster_b = b;
            p.s_static = silhouette_from_parts(a_static[static_cast<std::size_t>(a)],
                                               a_static[static_cast<std::size_t>(b)], separation(ma, mb, d_static));
            p.s_dynamic = silhouette_from_parts(a_dynamic[static_cast<std::size_t>(a)],
                                                a_dynamic[static_cast<std::size_t>(b)],
                                                separation(ma, mb, d_dynamic));
            pairs.push_back(p);
        }
    }
    return pairs;
}

EmbeddingEvaluation evaluate_embedding(const Dataset& dataset, const Matrix& embedding, const EvalOptions& options,
                                       OriginalSpaceDistances& distances) {
    if (embedding.rows() != static_cast<Eigen::Index>(dataset.num_nodes())) {
        throw DataError("evaluation: embedding has " + std::to_string(embedding.rows()) + " rows, dataset has " +
                        std::to_string(dataset.num_nodes()) + " nodes");
    }
    EmbeddingEvaluation out;
    out.clusters = kmeans(embedding, options.k, options.seed);
    out.pairs = evaluate_labels(out.clusters.labels, options.k, distances, options.seed, options.subsample_cap);
    out.quadrants = summarize_quadrants(out.pairs);
    return out;
}

EmbeddingEvaluation evaluate_embedding(const Dataset& dataset, const Matrix& embedding, const EvalOptions& options) {
    OriginalSpaceDistances distances(dataset);
    return evaluate_embedding(dataset, embedding, options, distances);
}

}  // namespace urbanfuse::metrics
