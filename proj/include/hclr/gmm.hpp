#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hclr/mask.hpp"

namespace hclr {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Symmetric 2x2 covariance.
struct Cov2 {
    double xx = 1.0;
    double xy = 0.0;
    double yy = 1.0;

    double det() const { return xx * yy - xy * xy; }
    double min_eigenvalue() const;
    friend bool operator==(const Cov2&, const Cov2&) = default;
};

inline constexpr double kCovarianceFloor = 1e-6;

/// One (anchor value, view value) point per embedding feature, in feature order.
using FeaturePointSet = std::vector<Point2>;

FeaturePointSet build_feature_points(std::span<const double> anchor, std::span<const double> view);

struct GmmState {
    std::vector<Point2> means;
    std::vector<Cov2> covariances;
    std::vector<double> mixing_weights;

    std::size_t components() const { return means.size(); }
    friend bool operator==(const GmmState&, const GmmState&) = default;
};

struct EmOptions {
    int max_iters = 100;
    double tol = 1e-6;        // stop once the log-likelihood gains less than this
    std::uint64_t seed = 0;   // cold-start seeding
};

struct EmFit {
    GmmState state;
    int iterations = 0;
    bool converged = false;
    /// Log-likelihood at the initial parameters and after every iteration.
    std::vector<double> log_likelihoods;
};

/// Full-covariance EM for an H-component 2D mixture.
///
/// Cold start picks k-means++ seeds from the points and orders components by
/// distance from the diagonal y = x, nearest first, so component 0 collects
/// the features that move least under augmentation. A warm start keeps the
/// given means in their positions. Either way each covariance starts
/// isotropic, scaled to the points nearest its mean.
EmFit em_fit(const FeaturePointSet& points, std::size_t components,
             const std::optional<std::vector<Point2>>& init_means = std::nullopt,
             const EmOptions& options = {});

double log_density(const GmmState& state, Point2 p);
double log_likelihood(const GmmState& state, const FeaturePointSet& points);

/// Hard masks from argmax responsibility: mask h (level h + 1) selects the
/// features assigned to component h. Ties go to the lower component. A
/// component with no features yields an empty mask.
std::vector<LevelMask> predict_masks(const GmmState& state, const FeaturePointSet& points);

}  // namespace hclr
