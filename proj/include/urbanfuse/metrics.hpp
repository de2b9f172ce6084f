#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "urbanfuse/common.hpp"
#include "urbanfuse/dataset.hpp"

namespace urbanfuse::metrics {

double dist_euclidean(std::span<const double> x, std::span<const double> y);

/// Dynamic time warping with absolute-difference local cost, unit steps
/// (insertion, deletion, match) and no warping band. Throws
/// std::invalid_argument on an empty series.
double dist_dtw(std::span<const double> a, std::span<const double> b);

/// Distance between two node indices.
using IndexDistance = std::function<double(int, int)>;

/// Mean distance over ordered pairs i != j inside the cluster; 0 for a
/// singleton.
double cohesion(std::span<const int> members, const IndexDistance& dist);

/// Single-linkage separation: minimum cross-cluster distance.
double separation(std::span<const int> cluster_k, std::span<const int> cluster_l,
                  const IndexDistance& dist);

/// (b - a) / max(a, b), defined as 0 when max(a, b) == 0.
double silhouette_term(double cohesion, double separation);

/// Symmetric pairwise silhouette from the two cohesions and the separation.
double silhouette_from_parts(double a_k, double a_l, double b_kl);

double silhouette_pair(std::span<const int> cluster_k, std::span<const int> cluster_l,
                       const IndexDistance& dist);

struct ClusterAssignment {
    std::vector<int> labels;
    int k = 0;
    std::uint64_t seed = 0;
    double inertia = 0.0;
    Matrix centers;  // k x d
    /// Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_history;
};

struct KmeansOptions {
    int restarts = 10;
    int max_iterations = 300;
};

/// k-means++ seeding, Lloyd iterations to an assignment fixpoint, best
/// inertia over restarts. Empty clusters are re-seeded at the point farthest
/// from its assigned center. Throws std::invalid_argument if k > n or k < 1.
ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, const KmeansOptions& options = {});

/// Members of each cluster, in ascending node index order.
std::vector<std::vector<int>> members_by_cluster(std::span<const int> labels, int k);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Number of clusters that stay apart in a 2-D layout: a point agrees when
/// at least half of its `neighbors` nearest layout neighbors share its label,
/// and a cluster counts as separated when at least `purity` of its points
/// agree.
int separated_clusters(const Matrix& layout, std::span<const int> labels, int neighbors = 10, double purity = 0.9);

struct SilhouettePair {
    int cluster_a = 0;
    int cluster_b = 0;
    double s_static = 0.0;
    double s_dynamic = 0.0;
};

struct QuadrantSummary {
    // Right/top means strictly positive; zero counts as left/bottom.
    std::size_t top_right = 0;
    std::size_t top_left = 0;
    std::size_t bottom_right = 0;
    std::size_t bottom_left = 0;

    std::size_t total() const noexcept { return top_right + top_left + bottom_right + bottom_left; }
    double fraction(std::size_t count) const noexcept {
        return total() == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total());
    }
    double tr_fraction() const noexcept { return fraction(top_right); }
};

QuadrantSummary summarize_quadrants(std::span<const SilhouettePair> pairs);

/// Lazily filled symmetric matrix of pairwise distances over the dataset
/// nodes. Entries are computed on first request and then reused, so several
/// embeddings of the same dataset share the expensive DTW work.
class PairwiseCache {
public:
    PairwiseCache(std::size_t n, std::function<double(int, int)> compute);

    double operator()(int i, int j);
    std::size_t computed() const noexcept { return computed_; }

private:
    std::size_t n_;
    std::function<double(int, int)> compute_;
    std::vector<double> values_;  // upper triangle, NaN = not yet computed
    std::size_t computed_ = 0;
};

/// Euclidean distances between rows of the static matrix and DTW distances
/// between rows of the dynamic matrix of one dataset.
struct OriginalSpaceDistances {
    explicit OriginalSpaceDistances(const Dataset& dataset);
    OriginalSpaceDistances(const OriginalSpaceDistances&) = delete;
    OriginalSpaceDistances& operator=(const OriginalSpaceDistances&) = delete;

    PairwiseCache static_dist;
    PairwiseCache dynamic_dist;

private:
    Matrix static_rows_;  // transposed: one contiguous column per node
    Matrix dynamic_rows_;
};

struct EvalOptions {
    int k = 12;
    std::uint64_t seed = 0;
    /// Maximum members per cluster used in the silhouette terms; nullopt
    /// evaluates every member.
    std::optional<std::size_t> subsample_cap;
};

struct EmbeddingEvaluation {
    ClusterAssignment clusters;
    std::vector<SilhouettePair> pairs;  // (a, b) with a < b, lexicographic
    QuadrantSummary quadrants;
};

/// Silhouette pairs for a given labelling, measured in the original static
/// (Euclidean) and dynamic (DTW) spaces.
std::vector<SilhouettePair> evaluate_labels(std::span<const int> labels, int k, OriginalSpaceDistances& distances,
                                            std::uint64_t seed, std::optional<std::size_t> subsample_cap);

/// k-means on the embedding, then silhouette pairs in the original spaces.
/// Throws DataError if subsampling would empty a cluster.
EmbeddingEvaluation evaluate_embedding(const Dataset& dataset, const Matrix& embedding, const EvalOptions& options,
                                       OriginalSpaceDistances& distances);
EmbeddingEvaluation evaluate_embedding(const Dataset& dataset, const Matrix& embedding, const EvalOptions& options);

}  // namespace urbanfuse::metrics
