#include <random>

#include "doctest.h"
#include "support.hpp"
#include "../oracles.hpp"

#include "urbanfuse/metrics.hpp"

using namespace urbanfuse;
using namespace urbanfuse::metrics;

namespace {

std::vector<double> row(const Matrix& m, int i) { return {m.row(i).begin(), m.row(i).end()}; }

IndexDistance scalar_points(const std::vector<double>& x) {
    return [x](int i, int j) { return std::abs(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]); };
}

Dataset dataset_with(const Matrix& static_x, const Matrix& dynamic_y) {
    std::vector<NodeId> ids;
    std::vector<GeoPoint> pts;
    for (Eigen::Index i = 0; i < static_x.rows(); ++i) {
        ids.push_back(1000 + i);
        pts.push_back({0.001 * static_cast<double>(i), 0.0});
    }
    Dataset d;
    d.graph = StreetGraph(ids, pts, {});
    d.static_features = static_x;
    d.dynamic_series = dynamic_y;
    for (Eigen::Index c = 0; c < static_x.cols(); ++c) d.static_columns.push_back({"s" + std::to_string(c), ""});
    for (Eigen::Index t = 0; t < dynamic_y.cols(); ++t) d.time_axis.push_back(YearMonth::from_ordinal(24000 + static_cast<int>(t)));
    return d;
}

}  // namespace

TEST_CASE("euclidean distance") {
    const std::vector<double> a{0, 0}, b{3, 4};
    CHECK(dist_euclidean(a, b) == 5.0);
    CHECK(dist_euclidean(a, a) == 0.0);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const auto m = testing::random_matrix(2, 11, rng);
        CHECK(dist_euclidean(row(m, 0), row(m, 1)) == doctest::Approx(oracle::euclid(row(m, 0), row(m, 1))).epsilon(1e-12));
    }
}

TEST_CASE("dtw worked examples") {
    const std::vector<double> zeros{0, 0, 0}, ones{1, 1, 1};
    CHECK(dist_dtw(ones, ones) == 0.0);
    CHECK(dist_dtw(zeros, ones) == 3.0);
    const std::vector<double> a{1, 2, 3}, b{2, 3, 4};
    CHECK(dist_dtw(a, b) == 2.0);
    CHECK(oracle::dtw_enumerate(a, b) == 2.0);
    const std::vector<double> single{5};
    CHECK(dist_dtw(single, a) == 4.0 + 3.0 + 2.0);
    CHECK_THROWS_AS(dist_dtw({}, a), std::invalid_argument);
}

TEST_CASE("dtw matches exhaustive path enumeration") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> len(1, 7);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<double> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const double d = dist_dtw(a, b);
        CHECK(d == doctest::Approx(oracle::dtw_enumerate(a, b)).epsilon(1e-12));
        CHECK(d == dist_dtw(b, a));
        CHECK(dist_dtw(a, a) == 0.0);
    }
}

TEST_CASE("cohesion, separation and pair silhouette worked examples") {
    const auto d = scalar_points({0, 2, 1, 5, 9, 7});
    CHECK(cohesion(std::vector<int>{0, 1}, d) == 2.0);
    CHECK(cohesion(std::vector<int>{3}, d) == 0.0);
    CHECK(separation(std::vector<int>{0, 2}, std::vector<int>{3, 4}, d) == 4.0);
    CHECK(separation(std::vector<int>{0}, std::vector<int>{0, 3}, d) == 0.0);
    // Two far singletons.
    CHECK(silhouette_pair(std::vector<int>{0}, std::vector<int>{4}, d) == 1.0);
    CHECK(silhouette_from_parts(2.0, 2.0, 2.0) == 0.0);
    CHECK(silhouette_term(0.0, 0.0) == 0.0);
    CHECK(silhouette_term(3.0, 0.0) == -1.0);
}

TEST_CASE("cohesion and separation match brute force on random clusters") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = testing::random_matrix(20, 3, rng);
        const IndexDistance d = [&](int i, int j) { return oracle::euclid(row(x, i), row(x, j)); };
        std::vector<int> k_idx, l_idx;
        oracle::Rows k_rows, l_rows;
        for (int i = 0; i < 20; ++i) {
            (i < 10 ? k_idx : l_idx).push_back(i);
            (i < 10 ? k_rows : l_rows).push_back(row(x, i));
        }
        const auto ref = oracle::silhouette(k_rows, l_rows, oracle::euclid);
        CHECK(cohesion(k_idx, d) == doctest::Approx(ref.a_k).epsilon(1e-12));
        CHECK(separation(k_idx, l_idx, d) == ref.b_kl);
        CHECK(silhouette_pair(k_idx, l_idx, d) == doctest::Approx(ref.s_kl).epsilon(1e-12));
        CHECK(silhouette_pair(k_idx, l_idx, d) == silhouette_pair(l_idx, k_idx, d));
        const double s = silhouette_pair(k_idx, l_idx, d);
        CHECK((s >= -1.0 && s <= 1.0));
    }
}

TEST_CASE("kmeans worked examples") {
    Matrix x(4, 1);
    x << 0, 1, 10, 11;
    const auto r = kmeans(x, 2, 3);
    CHECK(r.labels[0] == r.labels[1]);
    CHECK(r.labels[2] == r.labels[3]);
    CHECK(r.labels[0] != r.labels[2]);
    std::vector<double> centers{r.centers(0, 0), r.centers(1, 0)};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0] == 0.5);
    CHECK(centers[1] == 10.5);

    std::mt19937_64 rng(4);
    const Matrix y = testing::random_matrix(50, 3, rng);
    const auto one = kmeans(y, 1, 1);
    const double total = (y.rowwise() - y.colwise().mean()).squaredNorm();
    CHECK(one.inertia == doctest::Approx(total).epsilon(1e-12));
    CHECK_THROWS_AS(kmeans(y, 51, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(y, 0, 1), std::invalid_argument);
}

TEST_CASE("kmeans inertia never increases across Lloyd iterations") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix y = testing::random_matrix(300, 4, rng);
        const auto r = kmeans(y, 8, static_cast<std::uint64_t>(trial));
        REQUIRE(!r.inertia_history.empty());
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
        }
        for (int c = 0; c < 8; ++c) CHECK(std::count(r.labels.begin(), r.labels.end(), c) > 0);
        CHECK(kmeans(y, 8, static_cast<std::uint64_t>(trial)).labels == r.labels);
    }
}

TEST_CASE("adjusted rand index agrees with the contingency oracle") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> a(60), b(60);
        for (auto& v : a) v = lab(rng);
        for (auto& v : b) v = lab(rng);
        CHECK(adjusted_rand_index(a, b) == doctest::Approx(oracle::ari(a, b)).epsilon(1e-12));
    }
    std::vector<int> a{0, 0, 1, 1, 2}, b{2, 2, 0, 0, 1};
    CHECK(adjusted_rand_index(a, b) == 1.0);
}

TEST_CASE("quadrant summary") {
    const std::vector<SilhouettePair> pairs{{0, 1, .5, .5}, {0, 2, -.2, .3}, {1, 2, .4, -.1}, {0, 3, -.3, -.4}};
    const auto q = summarize_quadrants(pairs);
    CHECK(q.top_right == 1);
    CHECK(q.top_left == 1);
    CHECK(q.bottom_right == 1);
    CHECK(q.bottom_left == 1);
    CHECK(q.tr_fraction() == 0.25);
    const std::vector<SilhouettePair> edge{{0, 1, 0.0, 0.5}, {0, 2, 0.5, 0.0}};
    const auto e = summarize_quadrants(edge);
    CHECK(e.top_left == 1);
    CHECK(e.bottom_right == 1);
}

TEST_CASE("evaluate_embedding with k = 2 yields one pair") {
    std::mt19937_64 rng(5);
    const auto d = dataset_with(testing::random_matrix(12, 3, rng), testing::random_matrix(12, 6, rng, 0, 1));
    const auto ev = evaluate_embedding(d, testing::random_matrix(12, 2, rng), {2, 1, std::nullopt});
    CHECK(ev.pairs.size() == 1);
    CHECK(ev.quadrants.total() == 1);
}

TEST_CASE("one-hot embedding reproduces original-space oracle values") {
    std::mt19937_64 rng(6);
    const int n = 40, k = 4;
    std::vector<int> truth(n);
    Matrix onehot = Matrix::Zero(n, k);
    for (int i = 0; i < n; ++i) {
        truth[static_cast<std::size_t>(i)] = (i * 7) % k;
        onehot(i, truth[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Matrix xs = testing::random_matrix(n, 5, rng);
    const Matrix xd = testing::random_matrix(n, 8, rng, 0, 4);
    const auto d = dataset_with(xs, xd);
    const auto ev = evaluate_embedding(d, onehot, {k, 3, std::nullopt});
    CHECK(adjusted_rand_index(ev.clusters.labels, truth) == 1.0);
    CHECK(ev.pairs.size() == 6);
    const auto members = members_by_cluster(ev.clusters.labels, k);
    for (const auto& p : ev.pairs) {
        oracle::Rows sk, sl, dk, dl;
        for (int i : members[static_cast<std::size_t>(p.cluster_a)]) {
            sk.push_back(row(xs, i));
            dk.push_back(row(xd, i));
        }
        for (int i : members[static_cast<std::size_t>(p.cluster_b)]) {
            sl.push_back(row(xs, i));
            dl.push_back(row(xd, i));
        }
        CHECK(std::abs(p.s_static - oracle::silhouette(sk, sl, oracle::euclid).s_kl) < 1e-12);
        CHECK(std::abs(p.s_dynamic - oracle::silhouette(dk, dl, oracle::dtw_table).s_kl) < 1e-12);
    }
}

TEST_CASE("scaling static features keeps quadrant membership") {
    std::mt19937_64 rng(9);
    const int n = 30;
    const Matrix xs = testing::random_matrix(n, 4, rng);
    const Matrix xd = testing::random_matrix(n, 5, rng, 0, 1);
    const Matrix z = testing::random_matrix(n, 3, rng);
    const auto a = evaluate_embedding(dataset_with(xs, xd), z, {3, 2, std::nullopt});
    const auto b = evaluate_embedding(dataset_with(xs * 7.5, xd), z, {3, 2, std::nullopt});
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        CHECK((a.pairs[i].s_static > 0) == (b.pairs[i].s_static > 0));
        CHECK(a.pairs[i].s_static == doctest::Approx(b.pairs[i].s_static).epsilon(1e-12));
    }
    CHECK(a.quadrants.top_right == b.quadrants.top_right);
    CHECK(a.quadrants.bottom_left == b.quadrants.bottom_left);
}

TEST_CASE("an unlimited subsample cap equals the exhaustive evaluation") {
    std::mt19937_64 rng(10);
    const int n = 36;
    const auto d = dataset_with(testing::random_matrix(n, 3, rng), testing::random_matrix(n, 6, rng, 0, 2));
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    OriginalSpaceDistances dist(d);
    const auto exhaustive = evaluate_labels(labels, 3, dist, 1, std::nullopt);
    const auto capped = evaluate_labels(labels, 3, dist, 1, std::size_t{1000});
    REQUIRE(exhaustive.size() == capped.size());
    for (std::size_t i = 0; i < exhaustive.size(); ++i) {
        CHECK(exhaustive[i].s_static == capped[i].s_static);
        CHECK(exhaustive[i].s_dynamic == capped[i].s_dynamic);
    }
    const auto sub = evaluate_labels(labels, 3, dist, 1, std::size_t{4});
    CHECK(sub.size() == 3);
    CHECK(evaluate_labels(labels, 3, dist, 1, std::size_t{4})[0].s_static == sub[0].s_static);
    CHECK_THROWS_AS(evaluate_labels(labels, 3, dist, 1, std::size_t{0}), DataError);
    std::vector<int> missing(n, 0);
    CHECK_THROWS_AS(evaluate_labels(missing, 3, dist, 1, std::nullopt), DataError);
}

TEST_CASE("separated_clusters counts clean clusters in a layout") {
    Matrix layout(60, 2);
    std::vector<int> labels(60);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 0.1);
    for (int i = 0; i < 60; ++i) {
        const int c = i % 3;
        labels[static_cast<std::size_t>(i)] = c;
        layout.row(i) << 10.0 * c + g(rng), g(rng);
    }
    CHECK(separated_clusters(layout, labels) == 3);
    // Merge two blobs spatially: they can no longer both be separated.
    for (int i = 0; i < 60; ++i)
        if (labels[static_cast<std::size_t>(i)] == 2) layout(i, 0) -= 10.0;
    CHECK(separated_clusters(layout, labels) == 1);
}
