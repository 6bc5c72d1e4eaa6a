#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hclr/errors.hpp"
#include "hclr/gmm.hpp"

using namespace hclr;

namespace {

FeaturePointSet two_clusters(std::uint64_t seed, double noise = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise);
    FeaturePointSet pts;
    for (int i = 0; i < 10; ++i) pts.push_back({n(rng), n(rng)});
    for (int i = 0; i < 6; ++i) pts.push_back({5.0 + n(rng), 5.0 + n(rng)});
    return pts;
}

// Off-diagonal second cluster so the cold-start order is fixed.
FeaturePointSet diagonal_and_off(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.05);
    FeaturePointSet pts;
    for (int i = 0; i < 12; ++i) {
        double t = 0.2 * i - 1.0;
        pts.push_back({t + n(rng), t + n(rng)});
    }
    for (int i = 0; i < 8; ++i) pts.push_back({2.0 + n(rng), -2.0 + n(rng)});
    return pts;
}

Point2 centroid(const FeaturePointSet& p, std::size_t lo, std::size_t hi) {
    Point2 c{};
    for (std::size_t j = lo; j < hi; ++j) {
        c.x += p[j].x;
        c.y += p[j].y;
    }
    c.x /= double(hi - lo);
    c.y /= double(hi - lo);
    return c;
}

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST_CASE("build_feature_points") {
    std::vector<double> a{1, 2}, v{3, 4};
    CHECK(build_feature_points(a, v) == FeaturePointSet{{1, 3}, {2, 4}});
    auto same = build_feature_points(a, a);
    for (auto p : same) CHECK(p.x == p.y);
    std::vector<double> one{0.5};
    CHECK(build_feature_points(one, one).size() == 1);
    std::vector<double> three{1, 2, 3};
    CHECK_THROWS_AS(build_feature_points(a, three), LengthMismatch);
}

TEST_CASE("em recovers two clusters") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto pts = two_clusters(seed);
        auto fit = em_fit(pts, 2, std::nullopt, {.max_iters = 100, .tol = 1e-8, .seed = seed});
        const auto& s = fit.state;
        // both clusters sit on the diagonal; match components by position
        const std::size_t a = dist(s.means[0], {0, 0}) < dist(s.means[1], {0, 0}) ? 0 : 1;
        const std::size_t b = 1 - a;
        CHECK(dist(s.means[a], {0, 0}) < 0.1);
        CHECK(dist(s.means[b], {5, 5}) < 0.1);
        CHECK(s.mixing_weights[a] == doctest::Approx(0.625).epsilon(1e-6));
        CHECK(s.mixing_weights[b] == doctest::Approx(0.375).epsilon(1e-6));
        // oracle: cluster centroids
        CHECK(dist(s.means[a], centroid(pts, 0, 10)) < 1e-6);
        CHECK(dist(s.means[b], centroid(pts, 10, 16)) < 1e-6);
    }
}

TEST_CASE("em state invariants") {
    auto pts = diagonal_and_off(9);
    for (std::size_t H : {1u, 2u, 3u}) {
        auto fit = em_fit(pts, H, std::nullopt, {.seed = 4});
        double total = 0;
        for (double w : fit.state.mixing_weights) {
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        for (const auto& c : fit.state.covariances) CHECK(c.min_eigenvalue() >= kCovarianceFloor * (1 - 1e-9));
    }
}

TEST_CASE("single component is the sample mean and covariance") {
    auto pts = diagonal_and_off(3);
    auto fit = em_fit(pts, 1);
    const double n = double(pts.size());
    Point2 m = centroid(pts, 0, pts.size());
    double xx = 0, xy = 0, yy = 0;
    for (auto p : pts) {
        xx += (p.x - m.x) * (p.x - m.x);
        xy += (p.x - m.x) * (p.y - m.y);
        yy += (p.y - m.y) * (p.y - m.y);
    }
    const auto& s = fit.state;
    CHECK(s.means[0].x == doctest::Approx(m.x).epsilon(1e-12));
    CHECK(s.means[0].y == doctest::Approx(m.y).epsilon(1e-12));
    CHECK(s.covariances[0].xx == doctest::Approx(xx / n).epsilon(1e-12));
    CHECK(s.covariances[0].xy == doctest::Approx(xy / n).epsilon(1e-12));
    CHECK(s.covariances[0].yy == doctest::Approx(yy / n).epsilon(1e-12));
    CHECK(s.mixing_weights[0] == 1.0);
    CHECK(fit.iterations <= 2);
}

TEST_CASE("warm start at converged means") {
    for (std::uint64_t seed : {1u, 6u, 11u}) {
        auto pts = two_clusters(seed, 0.3);
        const double tol = 1e-6;
        auto cold = em_fit(pts, 2, std::nullopt, {.max_iters = 200, .tol = tol, .seed = seed});
        REQUIRE(cold.converged);
        auto warm = em_fit(pts, 2, cold.state.means, {.max_iters = 200, .tol = tol, .seed = 99});
        CHECK(warm.iterations <= 2);
        for (std::size_t k = 0; k < 2; ++k) CHECK(dist(warm.state.means[k], cold.state.means[k]) < tol * 10);
    }
}

TEST_CASE("warm start keeps component positions") {
    auto pts = diagonal_and_off(2);
    std::vector<Point2> swapped{{2, -2}, {0, 0}};
    auto fit = em_fit(pts, 2, swapped);
    CHECK(dist(fit.state.means[0], {2, -2}) < 0.1);
    auto masks = predict_masks(fit.state, pts);
    for (std::size_t j = 0; j < 12; ++j) CHECK(masks[1].weights[j] == 1.0);
    for (std::size_t j = 12; j < 20; ++j) CHECK(masks[0].weights[j] == 1.0);
}

TEST_CASE("cold start maps the diagonal cluster to level 1") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto pts = diagonal_and_off(seed);
        auto fit = em_fit(pts, 2, std::nullopt, {.seed = seed});
        auto masks = predict_masks(fit.state, pts);
        REQUIRE(masks.size() == 2);
        CHECK(masks[0].level == 1);
        CHECK(masks[1].level == 2);
        for (std::size_t j = 0; j < 12; ++j) CHECK(masks[0].weights[j] == 1.0);
        for (std::size_t j = 12; j < 20; ++j) CHECK(masks[1].weights[j] == 1.0);
    }
}

TEST_CASE("log likelihood") {
    GmmState unit{{{0.5, -1}}, {Cov2{}}, {1.0}};
    CHECK(log_likelihood(unit, {{0.5, -1}}) == doctest::Approx(std::log(1.0 / (2 * std::numbers::pi))).epsilon(1e-14));
    auto pts = diagonal_and_off(5);
    auto fit = em_fit(pts, 2, std::nullopt, {.max_iters = 50, .tol = 1e-12, .seed = 5});
    for (std::size_t t = 1; t < fit.log_likelihoods.size(); ++t)
        CHECK(fit.log_likelihoods[t] >= fit.log_likelihoods[t - 1] - 1e-9);
    CHECK(fit.log_likelihoods.back() == doctest::Approx(log_likelihood(fit.state, pts)).epsilon(1e-12));
    auto more = pts;
    more.push_back(pts[3]);
    CHECK(log_likelihood(fit.state, more) - log_likelihood(fit.state, pts) ==
          doctest::Approx(log_density(fit.state, pts[3])).epsilon(1e-10));
}

TEST_CASE("collinear points stay finite") {
    FeaturePointSet line;
    for (int j = 0; j < 8; ++j) line.push_back({double(j), double(j)});
    auto fit = em_fit(line, 2, std::nullopt, {.seed = 1});
    CHECK(std::isfinite(log_likelihood(fit.state, line)));
    FeaturePointSet same(5, Point2{1, 1});
    auto deg = em_fit(same, 2);
    CHECK(std::isfinite(log_likelihood(deg.state, same)));
    auto masks = predict_masks(deg.state, same);
    CHECK(masks[0].selected() + masks[1].selected() == 5);
}

TEST_CASE("masks partition the features") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 20; ++trial) {
        FeaturePointSet pts(16);
        for (auto& p : pts) p = {n(rng), n(rng)};
        for (std::size_t H : {1u, 2u, 3u}) {
            auto masks = predict_masks(em_fit(pts, H, std::nullopt, {.seed = std::uint64_t(trial)}).state, pts);
            REQUIRE(masks.size() == H);
            for (std::size_t j = 0; j < pts.size(); ++j) {
                double s = 0;
                for (const auto& m : masks) {
                    CHECK((m.weights[j] == 0.0 || m.weights[j] == 1.0));
                    s += m.weights[j];
                }
                CHECK(s == 1.0);
            }
            if (H == 1) CHECK(masks[0] == LevelMask::all_ones(1, pts.size()));
        }
    }
}

TEST_CASE("masks match nearest-cluster assignment on separated data") {
    auto pts = two_clusters(8);
    auto fit = em_fit(pts, 2, std::nullopt, {.seed = 8});
    auto masks = predict_masks(fit.state, pts);
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const std::size_t near = dist(pts[j], fit.state.means[0]) < dist(pts[j], fit.state.means[1]) ? 0 : 1;
        CHECK(masks[near].weights[j] == 1.0);
    }
}

TEST_CASE("ties go to the lower component and empty components give empty masks") {
    GmmState s{{{0, 0}, {0, 0}, {9, 9}}, {Cov2{}, Cov2{}, Cov2{}}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    auto masks = predict_masks(s, {{0.1, 0}, {-0.2, 0.1}});
    CHECK(masks[0].selected() == 2);
    CHECK(masks[1].empty());
    CHECK(masks[2].empty());
}

TEST_CASE("em preconditions and determinism") {
    FeaturePointSet two{{0, 0}, {1, 1}};
    CHECK_THROWS_AS(em_fit(two, 3), InsufficientPoints);
    CHECK_THROWS_AS(em_fit(two, 1, std::nullopt, {.max_iters = 0}), std::invalid_argument);
    CHECK_THROWS_AS(em_fit(two, 1, std::nullopt, {.tol = 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(em_fit(two, 2, std::vector<Point2>{{0, 0}}), std::invalid_argument);
    auto pts = diagonal_and_off(17);
    auto a = em_fit(pts, 3, std::nullopt, {.seed = 3});
    auto b = em_fit(pts, 3, std::nullopt, {.seed = 3});
    CHECK(a.state == b.state);
    CHECK(a.log_likelihoods == b.log_likelihoods);
}
