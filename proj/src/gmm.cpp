#include "hclr/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "hclr/errors.hpp"

namespace hclr {

double Cov2::min_eigenvalue() const {
    const double mean = 0.5 * (xx + yy);
    const double radius = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    return mean - radius;
}

FeaturePointSet build_feature_points(std::span<const double> anchor, std::span<const double> view) {
    if (anchor.size() != view.size()) {
        throw LengthMismatch("anchor has " + std::to_string(anchor.size()) + " features, view has " +
                             std::to_string(view.size()));
    }
    FeaturePointSet points(anchor.size());
    for (std::size_t j = 0; j < anchor.size(); ++j) points[j] = {anchor[j], view[j]};
    return points;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sq_dist(Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

std::size_t nearest(Point2 p, const std::vector<Point2>& means) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < means.size(); ++k) {
        if (sq_dist(p, means[k]) < sq_dist(p, means[best])) best = k;
    }
    return best;
}

Cov2 apply_floor(Cov2 c) {
    const double lo = c.min_eigenvalue();
    if (lo < kCovarianceFloor) {
        c.xx += kCovarianceFloor - lo;
        c.yy += kCovarianceFloor - lo;
    }
    return c;
}

double gaussian_log_pdf(Point2 p, Point2 mean, const Cov2& c) {
    const double det = c.det();
    const double dx = p.x - mean.x, dy = p.y - mean.y;
    const double maha = (c.yy * dx * dx - 2.0 * c.xy * dx * dy + c.xx * dy * dy) / det;
    return -0.5 * maha - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

// Per-point component log-joint log(w_k) + log N(p; mu_k, S_k), row-major n x K.
std::vector<double> log_joint(const GmmState& s, const FeaturePointSet& points) {
    const std::size_t K = s.components();
    std::vector<double> out(points.size() * K);
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const double w = s.mixing_weights[k];
            out[j * K + k] = w > 0.0 ? std::log(w) + gaussian_log_pdf(points[j], s.means[k], s.covariances[k])
                                     : kNegInf;
        }
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    const double hi = *std::max_element(v.begin(), v.end());
    if (hi == kNegInf) return kNegInf;
    double z = 0.0;
    for (double x : v) z += std::exp(x - hi);
    return hi + std::log(z);
}

// E-step: responsibilities (n x K) and the log-likelihood of the current state.
double expectation(const GmmState& s, const FeaturePointSet& points, std::vector<double>& resp) {
    const std::size_t K = s.components();
    resp = log_joint(s, points);
    double ll = 0.0;
    for (std::size_t j = 0; j < points.size(); ++j) {
        std::span<double> row(resp.data() + j * K, K);
        const double lse = log_sum_exp(row);
        ll += lse;
        for (auto& r : row) r = std::exp(r - lse);
    }
    return ll;
}

Cov2 isotropic(double variance) {
    const double v = std::max(variance, kCovarianceFloor);
    return Cov2{v, 0.0, v};
}

double pooled_variance(const FeaturePointSet& points) {
    Point2 mean{};
    for (auto p : points) {
        mean.x += p.x;
        mean.y += p.y;
    }
    mean.x /= static_cast<double>(points.size());
    mean.y /= static_cast<double>(points.size());
    double ss = 0.0;
    for (auto p : points) ss += sq_dist(p, mean);
    return ss / (2.0 * static_cast<double>(points.size()));
}

// Isotropic covariance per component from the points nearest its mean;
// components with fewer than two such points take the pooled variance.
GmmState initial_state(const FeaturePointSet& points, std::vector<Point2> means) {
    const std::size_t K = means.size();
    const double pooled = pooled_variance(points);
    std::vector<double> ss(K, 0.0);
    std::vector<std::size_t> count(K, 0);
    for (auto p : points) {
        const std::size_t best = nearest(p, means);
        ss[best] += sq_dist(p, means[best]);
        ++count[best];
    }
    GmmState s;
    s.means = std::move(means);
    s.mixing_weights.assign(K, 1.0 / static_cast<double>(K));
    for (std::size_t k = 0; k < K; ++k) {
        const double var = count[k] >= 2 ? ss[k] / (2.0 * static_cast<double>(count[k])) : pooled;
        s.covariances.push_back(isotropic(var));
    }
    return s;
}

std::vector<Point2> kmeanspp_seeds(const FeaturePointSet& points, std::size_t K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Point2> seeds;
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    seeds.push_back(points[pick(rng)]);
    std::vector<double> d2(points.size());
    while (seeds.size() < K) {
        double total = 0.0;
        for (std::size_t j = 0; j < points.size(); ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (auto s : seeds) best = std::min(best, sq_dist(points[j], s));
            d2[j] = best;
            total += best;
        }
        if (total <= 0.0) {
            seeds.push_back(points[pick(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        std::size_t chosen = points.size() - 1;
        for (std::size_t j = 0; j < points.size(); ++j) {
            target -= d2[j];
            if (target < 0.0) {
                chosen = j;
                break;
            }
        }
        seeds.push_back(points[chosen]);
    }
    return seeds;
}

// Lloyd refinement; returns the within-cluster sum of squares.
double lloyd(const FeaturePointSet& points, std::vector<Point2>& means, int iters) {
    const std::size_t K = means.size();
    double inertia = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<Point2> sums(K);
        std::vector<std::size_t> count(K, 0);
        for (auto p : points) {
            const std::size_t k = nearest(p, means);
            sums[k].x += p.x;
            sums[k].y += p.y;
            ++count[k];
        }
        bool moved = false;
        for (std::size_t k = 0; k < K; ++k) {
            if (count[k] == 0) continue;
            Point2 m{sums[k].x / double(count[k]), sums[k].y / double(count[k])};
            moved = moved || !(m == means[k]);
            means[k] = m;
        }
        if (!moved) break;
    }
    for (auto p : points) inertia += sq_dist(p, means[nearest(p, means)]);
    return inertia;
}

constexpr int kSeedRestarts = 8;

// Best of several k-means++ seedings after Lloyd refinement, ordered by
// distance from the diagonal.
std::vector<Point2> cold_start_means(const FeaturePointSet& points, std::size_t K, std::uint64_t seed) {
    std::vector<Point2> best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < kSeedRestarts; ++r) {
        auto means = kmeanspp_seeds(points, K, seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(r));
        const double inertia = lloyd(points, means, 50);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best = std::move(means);
        }
    }
    std::stable_sort(best.begin(), best.end(),
                     [](Point2 a, Point2 b) { return std::abs(a.x - a.y) < std::abs(b.x - b.y); });
    return best;
}

void maximization(GmmState& s, const FeaturePointSet& points, const std::vector<double>& resp,
                  double pooled) {
    const std::size_t K = s.components();
    const double n = static_cast<double>(points.size());
    for (std::size_t k = 0; k < K; ++k) {
        double nk = 0.0;
        Point2 mean{};
        for (std::size_t j = 0; j < points.size(); ++j) {
            const double r = resp[j * K + k];
            nk += r;
            mean.x += r * points[j].x;
            mean.y += r * points[j].y;
        }
        s.mixing_weights[k] = nk / n;
        if (nk < 1e-12) {
            // Nothing assigned: keep the mean, widen back to the pooled scale.
            s.covariances[k] = isotropic(pooled);
            continue;
        }
        mean.x /= nk;
        mean.y /= nk;
        Cov2 c{0.0, 0.0, 0.0};
        for (std::size_t j = 0; j < points.size(); ++j) {
            const double r = resp[j * K + k];
            const double dx = points[j].x - mean.x, dy = points[j].y - mean.y;
            c.xx += r * dx * dx;
            c.xy += r * dx * dy;
            c.yy += r * dy * dy;
        }
        c.xx /= nk;
        c.xy /= nk;
        c.yy /= nk;
        s.means[k] = mean;
        s.covariances[k] = apply_floor(c);
    }
}

}  // namespace

EmFit em_fit(const FeaturePointSet& points, std::size_t components,
             const std::optional<std::vector<Point2>>& init_means, const EmOptions& options) {
    if (components < 1) throw std::invalid_argument("em_fit needs at least one component");
    if (points.size() < components) {
        throw InsufficientPoints(std::to_string(points.size()) + " points cannot support " +
                                 std::to_string(components) + " components");
    }
    if (options.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(options.tol > 0.0)) throw std::invalid_argument("tol must be positive");
    for (auto p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("non-finite feature point");
    }

    std::vector<Point2> means;
    if (init_means) {
        if (init_means->size() != components) {
            throw std::invalid_argument("warm start needs one mean per component");
        }
        means = *init_means;
    } else {
        means = cold_start_means(points, components, options.seed);
    }

    EmFit fit;
    fit.state = initial_state(points, std::move(means));
    const double pooled = pooled_variance(points);
    std::vector<double> resp;
    double ll = expectation(fit.state, points, resp);
    fit.log_likelihoods.push_back(ll);
    for (int it = 1; it <= options.max_iters; ++it) {
        maximization(fit.state, points, resp, pooled);
        const double next = expectation(fit.state, points, resp);
        fit.log_likelihoods.push_back(next);
        fit.iterations = it;
        const double gain = next - ll;
        ll = next;
        if (gain < options.tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

double log_density(const GmmState& state, Point2 p) {
    const FeaturePointSet one{p};
    const auto joint = log_joint(state, one);
    return log_sum_exp(joint);
}

double log_likelihood(const GmmState& state, const FeaturePointSet& points) {
    double ll = 0.0;
    for (auto p : points) ll += log_density(state, p);
    return ll;
}

std::vector<LevelMask> predict_masks(const GmmState& state, const FeaturePointSet& points) {
    const std::size_t K = state.components();
    std::vector<LevelMask> masks;
    for (std::size_t k = 0; k < K; ++k) {
        masks.push_back(LevelMask{static_cast<int>(k + 1), std::vector<double>(points.size(), 0.0),
                                  MaskKind::hard});
    }
    const auto joint = log_joint(state, points);
    for (std::size_t j = 0; j < points.size(); ++j) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
            if (joint[j * K + k] > joint[j * K + best]) best = k;
        }
        masks[best].weights[j] = 1.0;
    }
    return masks;
}

}  // namespace hclr
