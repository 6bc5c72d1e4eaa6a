#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "hclr/errors.hpp"
#include "hclr/train.hpp"

namespace hclr {

namespace {

// Labels remapped to 0..K-1 in ascending id order.
std::vector<int> dense_labels(const std::vector<int>& labels, std::size_t& classes) {
    std::map<int, int> ids;
    for (int l : labels) ids.emplace(l, 0);
    int next = 0;
    for (auto& [k, v] : ids) v = next++;
    classes = ids.size();
    std::vector<int> out;
    for (int l : labels) out.push_back(ids[l]);
    return out;
}

}  // namespace

double linear_probe(const Tensor& embeddings, const std::vector<int>& labels, std::uint64_t split_seed,
                    const ProbeOptions& options) {
    const std::size_t n = embeddings.rows();
    if (embeddings.rank() != 2 || labels.size() != n) throw ShapeMismatch("one label per embedding row");
    if (n < 10) throw std::invalid_argument("linear probe needs at least 10 samples");
    std::size_t K = 0;
    const auto y = dense_labels(labels, K);
    if (K < 2) throw SingleClass("linear probe needs at least two classes");
    const std::size_t d = embeddings.cols();
    const Split split = split_indices(n, split_seed);

    std::vector<double> W(K * d, 0.0), b(K, 0.0), gW(K * d), gb(K), p(K);
    const double inv_n = 1.0 / static_cast<double>(split.train.size());
    for (int step = 0; step < options.steps; ++step) {
        std::fill(gW.begin(), gW.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (auto i : split.train) {
            auto x = embeddings.row(i);
            double hi = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                double s = b[k];
                for (std::size_t j = 0; j < d; ++j) s += W[k * d + j] * x[j];
                p[k] = s;
                hi = std::max(hi, s);
            }
            double z = 0.0;
            for (auto& v : p) z += (v = std::exp(v - hi));
            for (std::size_t k = 0; k < K; ++k) {
                const double r = (p[k] / z - (static_cast<int>(k) == y[i] ? 1.0 : 0.0)) * inv_n;
                gb[k] += r;
                for (std::size_t j = 0; j < d; ++j) gW[k * d + j] += r * x[j];
            }
        }
        for (std::size_t k = 0; k < K * d; ++k) W[k] -= options.learning_rate * gW[k];
        for (std::size_t k = 0; k < K; ++k) b[k] -= options.learning_rate * gb[k];
    }

    std::size_t correct = 0;
    for (auto i : split.test) {
        auto x = embeddings.row(i);
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            double s = b[k];
            for (std::size_t j = 0; j < d; ++j) s += W[k * d + j] * x[j];
            if (s > best_score) {
                best_score = s;
                best = k;
            }
        }
        if (static_cast<int>(best) == y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

double silhouette(const Tensor& embeddings, const std::vector<int>& labels) {
    const std::size_t n = embeddings.rows();
    if (embeddings.rank() != 2 || labels.size() != n) throw ShapeMismatch("one label per embedding row");
    std::size_t K = 0;
    const auto y = dense_labels(labels, K);
    if (K < 2) throw DegenerateClusters("silhouette needs at least two clusters");
    std::vector<std::size_t> size(K, 0);
    for (int c : y) ++size[c];
    for (auto s : size) {
        if (s < 2) throw DegenerateClusters("every cluster needs at least two members");
    }
    const std::size_t d = embeddings.cols();
    double total = 0.0;
    std::vector<double> dist_sum(K);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        auto xi = embeddings.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto xj = embeddings.row(j);
            double ss = 0.0;
            for (std::size_t k = 0; k < d; ++k) ss += (xi[k] - xj[k]) * (xi[k] - xj[k]);
            dist_sum[y[j]] += std::sqrt(ss);
        }
        const double a = dist_sum[y[i]] / static_cast<double>(size[y[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < K; ++c) {
            if (static_cast<int>(c) != y[i]) b = std::min(b, dist_sum[c] / static_cast<double>(size[c]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

Projection pca_project(const Tensor& embeddings, std::size_t k) {
    const std::size_t n = embeddings.rows();
    const std::size_t d = embeddings.cols();
    if (embeddings.rank() != 2 || n < 2) throw std::invalid_argument("PCA needs at least two rows");
    if (k < 1 || k > d) throw std::invalid_argument("PCA component count outside [1, d]");
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Mat X = Eigen::Map<const Mat>(embeddings.values().data(), static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(d));
    X.rowwise() -= X.colwise().mean();
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);  // ascending
    Eigen::MatrixXd top = eig.eigenvectors().rightCols(static_cast<Eigen::Index>(k)).rowwise().reverse();
    // fix the sign: largest-magnitude loading positive
    for (Eigen::Index c = 0; c < top.cols(); ++c) {
        Eigen::Index at = 0;
        top.col(c).cwiseAbs().maxCoeff(&at);
        if (top(at, c) < 0.0) top.col(c) *= -1.0;
    }
    const Eigen::MatrixXd coords = X * top;

    Projection p;
    std::vector<double> v(n * k);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) v[r * k + c] = coords(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    p.coords = Tensor::matrix(n, k, std::move(v));
    const double total = values.sum();
    p.variance_explained = total > 0.0 ? values.tail(static_cast<Eigen::Index>(k)).sum() / total : 0.0;
    return p;
}

}  // namespace hclr
