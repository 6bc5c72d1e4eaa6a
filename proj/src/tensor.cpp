#include "hclr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hclr/errors.hpp"

namespace hclr {

namespace {

constexpr double kNormFloor = 1e-12;

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Tensor& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape()[i]);
    }
    return s + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b));
    }
}

Graph& graph_of(Var a, Var b) {
    if (a.graph != b.graph || a.graph == nullptr) {
        throw std::invalid_argument("operands belong to different graphs");
    }
    return *a.graph;
}

void accumulate(Graph& g, std::size_t id, std::span<const double> delta) {
    if (!g.requires_grad(id)) return;
    auto& buf = g.grad_buffer(id);
    for (std::size_t i = 0; i < delta.size(); ++i) buf[i] += delta[i];
}

}  // namespace

// ----- Tensor -----

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.size() > 2) throw std::invalid_argument("tensors have rank at most 2");
    for (auto d : shape_) {
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    }
    if (product(shape_) != values_.size()) {
        throw ShapeMismatch("shape " + shape_str(*this) + " does not match " +
                            std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

double Tensor::item() const {
    if (values_.size() != 1) throw NotScalar("item() on tensor of shape " + shape_str(*this));
    return values_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return graph->value(*this); }

// ----- Graph -----

Var Graph::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
    Node node{std::move(value), {}, needs, std::move(inputs), {}};
    if (needs) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

std::vector<double> Graph::grad(Var v) const {
    const auto& node = nodes_[v.id];
    if (node.grad.empty()) return std::vector<double>(node.value.size(), 0.0);
    return node.grad;
}

std::vector<double>& Graph::grad_buffer(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
}

void Graph::zero_grad() {
    for (auto& node : nodes_) node.grad.clear();
}

void Graph::backward(Var loss) {
    if (loss.graph != this) throw std::invalid_argument("loss recorded on another graph");
    if (nodes_[loss.id].value.size() != 1) {
        throw NotScalar("backward() needs a scalar loss, got " +
                        std::to_string(nodes_[loss.id].value.size()) + " elements");
    }
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] += 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        auto& node = nodes_[id];
        if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
        node.backward(*this, id);
    }
}

// ----- elementwise -----

Var add(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    require_same_shape(A, B, "add");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        accumulate(g, a.id, up);
        accumulate(g, b.id, up);
    });
}

Var sub(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    require_same_shape(A, B, "sub");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        accumulate(g, a.id, up);
        if (g.requires_grad(b.id)) {
            auto& gb = g.grad_buffer(b.id);
            for (std::size_t i = 0; i < up.size(); ++i) gb[i] -= up[i];
        }
    });
}

Var mul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    require_same_shape(A, B, "mul");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& A = g.value(a.id);
        const Tensor& B = g.value(b.id);
        if (g.requires_grad(a.id)) {
            auto& ga = g.grad_buffer(a.id);
            for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * B[i];
        }
        if (g.requires_grad(b.id)) {
            auto& gb = g.grad_buffer(b.id);
            for (std::size_t i = 0; i < up.size(); ++i) gb[i] += up[i] * A[i];
        }
    });
}

Var add_row(Var a, Var r) {
    Graph& g = graph_of(a, r);
    const Tensor& A = g.value(a);
    const Tensor& R = g.value(r);
    if (R.rank() != 1 || R.size() != A.cols()) throw ShapeMismatch("add_row: row length mismatch");
    Tensor out = A;
    const std::size_t cols = A.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += R[i % cols];
    return g.record(std::move(out), {a.id, r.id}, [a, r, cols](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        accumulate(g, a.id, up);
        if (g.requires_grad(r.id)) {
            auto& gr = g.grad_buffer(r.id);
            for (std::size_t i = 0; i < up.size(); ++i) gr[i % cols] += up[i];
        }
    });
}

Var mul_row(Var a, Var r) {
    Graph& g = graph_of(a, r);
    const Tensor& A = g.value(a);
    const Tensor& R = g.value(r);
    if (R.rank() != 1 || R.size() != A.cols()) throw ShapeMismatch("mul_row: row length mismatch");
    Tensor out = A;
    const std::size_t cols = A.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= R[i % cols];
    return g.record(std::move(out), {a.id, r.id}, [a, r, cols](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& A = g.value(a.id);
        const Tensor& R = g.value(r.id);
        if (g.requires_grad(a.id)) {
            auto& ga = g.grad_buffer(a.id);
            for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * R[i % cols];
        }
        if (g.requires_grad(r.id)) {
            auto& gr = g.grad_buffer(r.id);
            for (std::size_t i = 0; i < up.size(); ++i) gr[i % cols] += up[i] * A[i];
        }
    });
}

Var sub_scalar(Var v, Var s) {
    Graph& g = graph_of(v, s);
    const Tensor& S = g.value(s);
    if (S.size() != 1) throw ShapeMismatch("sub_scalar: second operand must be scalar");
    const double sv = S[0];
    Tensor out = g.value(v);
    for (auto& x : out.data()) x -= sv;
    return g.record(std::move(out), {v.id, s.id}, [v, s](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        accumulate(g, v.id, up);
        if (g.requires_grad(s.id)) {
            double total = 0.0;
            for (double u : up) total += u;
            g.grad_buffer(s.id)[0] -= total;
        }
    });
}

Var scale(Var a, double factor) {
    Graph& g = *a.graph;
    Tensor out = g.value(a);
    for (auto& x : out.data()) x *= factor;
    return g.record(std::move(out), {a.id}, [a, factor](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        auto& ga = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * factor;
    });
}

// ----- linear algebra -----

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
        throw ShapeMismatch("matmul: " + shape_str(A) + " x " + shape_str(B));
    }
    const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * B[p * m + j];
        }
    }
    return g.record(std::move(out), {a.id, b.id}, [a, b, n, k, m](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& A = g.value(a.id);
        const Tensor& B = g.value(b.id);
        if (g.requires_grad(a.id)) {
            auto& ga = g.grad_buffer(a.id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += up[i * m + j] * B[p * m + j];
                    ga[i * k + p] += acc;
                }
        }
        if (g.requires_grad(b.id)) {
            auto& gb = g.grad_buffer(b.id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * up[i * m + j];
                }
        }
    });
}

Var matmul_nt(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) {
        throw ShapeMismatch("matmul_nt: " + shape_str(A) + " x " + shape_str(B) + "^T");
    }
    const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
            out[i * m + j] = acc;
        }
    }
    return g.record(std::move(out), {a.id, b.id}, [a, b, n, k, m](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& A = g.value(a.id);
        const Tensor& B = g.value(b.id);
        const bool ra = g.requires_grad(a.id);
        const bool rb = g.requires_grad(b.id);
        // Take both buffers before writing: a and b may be the same node.
        std::vector<double>* ga = ra ? &g.grad_buffer(a.id) : nullptr;
        std::vector<double>* gb = rb ? &g.grad_buffer(b.id) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double u = up[i * m + j];
                if (u == 0.0) continue;
                if (ra)
                    for (std::size_t p = 0; p < k; ++p) (*ga)[i * k + p] += u * B[j * k + p];
                if (rb)
                    for (std::size_t p = 0; p < k; ++p) (*gb)[j * k + p] += u * A[i * k + p];
            }
        }
    });
}

Var matvec(Var a, Var v) {
    Graph& g = graph_of(a, v);
    const Tensor& A = g.value(a);
    const Tensor& V = g.value(v);
    if (A.rank() != 2 || V.rank() != 1 || A.cols() != V.size()) {
        throw ShapeMismatch("matvec: " + shape_str(A) + " x " + shape_str(V));
    }
    const std::size_t n = A.rows(), k = A.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * V[p];
        out[i] = acc;
    }
    return g.record(Tensor::vector(std::move(out)), {a.id, v.id},
                    [a, v, n, k](Graph& g, std::size_t self) {
                        const auto& up = g.upstream(self);
                        const Tensor& A = g.value(a.id);
                        const Tensor& V = g.value(v.id);
                        if (g.requires_grad(a.id)) {
                            auto& ga = g.grad_buffer(a.id);
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += up[i] * V[p];
                        }
                        if (g.requires_grad(v.id)) {
                            auto& gv = g.grad_buffer(v.id);
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t p = 0; p < k; ++p) gv[p] += up[i] * A[i * k + p];
                        }
                    });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul_nt(x, weight), bias); }

// ----- pointwise nonlinearities -----

namespace {

template <typename Forward, typename Derivative>
Var unary(Var a, Forward f, Derivative df) {
    Graph& g = *a.graph;
    Tensor out = g.value(a);
    for (auto& x : out.data()) x = f(x);
    return g.record(std::move(out), {a.id}, [a, df](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& in = g.value(a.id);
        const Tensor& out = g.value(self);
        auto& ga = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * df(in[i], out[i]);
    });
}

}  // namespace

Var relu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double x : a.value().values()) {
        if (!(x > 0.0)) throw std::domain_error("log of non-positive value");
    }
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ----- reductions and reshaping -----

Var sum(Var a) {
    Graph& g = *a.graph;
    const Tensor& A = g.value(a);
    double total = 0.0;
    for (double x : A.values()) total += x;
    return g.record(Tensor::scalar(total), {a.id}, [a](Graph& g, std::size_t self) {
        const double u = g.upstream(self)[0];
        for (auto& x : g.grad_buffer(a.id)) x += u;
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row(Var a, std::size_t i) {
    Graph& g = *a.graph;
    const Tensor& A = g.value(a);
    if (A.rank() != 2 || i >= A.rows()) throw std::out_of_range("row index out of range");
    const std::size_t cols = A.cols();
    auto r = A.row(i);
    Tensor out = Tensor::vector(std::vector<double>(r.begin(), r.end()));
    return g.record(std::move(out), {a.id}, [a, i, cols](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        auto& ga = g.grad_buffer(a.id);
        for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += up[j];
    });
}

Var concat_rows(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) {
        throw ShapeMismatch("concat_rows: " + shape_str(A) + " and " + shape_str(B));
    }
    std::vector<double> vals(A.data());
    vals.insert(vals.end(), B.data().begin(), B.data().end());
    const std::size_t split = A.size();
    Tensor out = Tensor::matrix(A.rows() + B.rows(), A.cols(), std::move(vals));
    return g.record(std::move(out), {a.id, b.id}, [a, b, split](Graph& g, std::size_t self) {
        std::span<const double> up = g.upstream(self);
        accumulate(g, a.id, up.subspan(0, split));
        accumulate(g, b.id, up.subspan(split));
    });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Graph& g = *a.graph;
    Tensor out(std::move(shape), g.value(a).data());
    return g.record(std::move(out), {a.id}, [a](Graph& g, std::size_t self) {
        accumulate(g, a.id, g.upstream(self));
    });
}

Var gather(Var v, std::span<const std::size_t> indices) {
    Graph& g = *v.graph;
    const Tensor& V = g.value(v);
    if (indices.empty()) throw std::invalid_argument("gather: empty index set");
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        if (i >= V.size()) throw std::out_of_range("gather index out of range");
        out.push_back(V[i]);
    }
    return g.record(Tensor::vector(std::move(out)), {v.id},
                    [v, idx = std::move(idx)](Graph& g, std::size_t self) {
                        const auto& up = g.upstream(self);
                        auto& gv = g.grad_buffer(v.id);
                        for (std::size_t j = 0; j < idx.size(); ++j) gv[idx[j]] += up[j];
                    });
}

Var add_n(std::span<const Var> terms) {
    if (terms.empty()) throw std::invalid_argument("add_n: no terms");
    Graph& g = *terms[0].graph;
    Tensor out = g.value(terms[0]);
    std::vector<std::size_t> ids{terms[0].id};
    for (std::size_t t = 1; t < terms.size(); ++t) {
        const Tensor& T = g.value(terms[t]);
        require_same_shape(out, T, "add_n");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += T[i];
        ids.push_back(terms[t].id);
    }
    auto inputs = ids;
    return g.record(std::move(out), std::move(inputs), [ids](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        for (auto id : ids) accumulate(g, id, up);
    });
}

// ----- normalization and softmax family -----

Var l2_normalize(Var a) {
    Graph& g = *a.graph;
    const Tensor& A = g.value(a);
    const std::size_t rows = A.rank() == 2 ? A.rows() : 1;
    const std::size_t cols = A.size() / rows;
    std::vector<double> norms(rows);
    Tensor out = A;
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ss += A[r * cols + c] * A[r * cols + c];
        const double n = std::sqrt(ss);
        if (!(n > kNormFloor)) {
            throw ZeroNormRow("l2_normalize: row " + std::to_string(r) + " has norm " +
                              std::to_string(n));
        }
        norms[r] = n;
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= n;
    }
    return g.record(std::move(out), {a.id},
                    [a, rows, cols, norms = std::move(norms)](Graph& g, std::size_t self) {
                        const auto& up = g.upstream(self);
                        const Tensor& y = g.value(self);
                        auto& ga = g.grad_buffer(a.id);
                        // d/dx (x/|x|) applied to u: (u - y (y.u)) / |x|
                        for (std::size_t r = 0; r < rows; ++r) {
                            double yu = 0.0;
                            for (std::size_t c = 0; c < cols; ++c)
                                yu += y[r * cols + c] * up[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                ga[i] += (up[i] - y[i] * yu) / norms[r];
                            }
                        }
                    });
}

Var softmax(Var v, double scale_factor) {
    if (!(scale_factor > 0.0)) throw std::invalid_argument("softmax: scale must be positive");
    Graph& g = *v.graph;
    const Tensor& V = g.value(v);
    const std::size_t rows = V.rank() == 2 ? V.rows() : 1;
    const std::size_t cols = V.size() / rows;
    Tensor out = V;
    for (std::size_t r = 0; r < rows; ++r) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) hi = std::max(hi, scale_factor * V[r * cols + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double e = std::exp(scale_factor * V[r * cols + c] - hi);
            out[r * cols + c] = e;
            z += e;
        }
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
    }
    return g.record(std::move(out), {v.id},
                    [v, rows, cols, scale_factor](Graph& g, std::size_t self) {
                        const auto& up = g.upstream(self);
                        const Tensor& y = g.value(self);
                        auto& gv = g.grad_buffer(v.id);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double yu = 0.0;
                            for (std::size_t c = 0; c < cols; ++c)
                                yu += y[r * cols + c] * up[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                gv[i] += scale_factor * y[i] * (up[i] - yu);
                            }
                        }
                    });
}

Var logsumexp_except(Var v, std::size_t skip) {
    Graph& g = *v.graph;
    const Tensor& V = g.value(v);
    if (V.rank() > 1) throw ShapeMismatch("logsumexp_except expects a vector");
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t kept = 0;
    for (std::size_t j = 0; j < V.size(); ++j) {
        if (j == skip) continue;
        hi = std::max(hi, V[j]);
        ++kept;
    }
    if (kept == 0) throw std::invalid_argument("logsumexp_except: nothing left to sum");
    double z = 0.0;
    for (std::size_t j = 0; j < V.size(); ++j) {
        if (j != skip) z += std::exp(V[j] - hi);
    }
    const double lse = hi + std::log(z);
    return g.record(Tensor::scalar(lse), {v.id}, [v, skip, lse](Graph& g, std::size_t self) {
        const double u = g.upstream(self)[0];
        const Tensor& V = g.value(v.id);
        auto& gv = g.grad_buffer(v.id);
        for (std::size_t j = 0; j < V.size(); ++j) {
            if (j != skip) gv[j] += u * std::exp(V[j] - lse);
        }
    });
}

Var max_reduce(Var v) {
    Graph& g = *v.graph;
    const Tensor& V = g.value(v);
    std::size_t best = 0;
    for (std::size_t j = 1; j < V.size(); ++j) {
        if (V[j] > V[best]) best = j;
    }
    return g.record(Tensor::scalar(V[best]), {v.id}, [v, best](Graph& g, std::size_t self) {
        g.grad_buffer(v.id)[best] += g.upstream(self)[0];
    });
}

Var maximum_scalar(Var v, Var s) {
    Graph& g = graph_of(v, s);
    const Tensor& S = g.value(s);
    if (S.size() != 1) throw ShapeMismatch("maximum_scalar: second operand must be scalar");
    const double sv = S[0];
    Tensor out = g.value(v);
    for (auto& x : out.data()) x = std::max(x, sv);
    return g.record(std::move(out), {v.id, s.id}, [v, s, sv](Graph& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const Tensor& V = g.value(v.id);
        const bool rv = g.requires_grad(v.id);
        double to_s = 0.0;
        std::vector<double>* gv = rv ? &g.grad_buffer(v.id) : nullptr;
        for (std::size_t j = 0; j < up.size(); ++j) {
            if (V[j] >= sv) {
                if (rv) (*gv)[j] += up[j];
            } else {
                to_s += up[j];
            }
        }
        if (g.requires_grad(s.id)) g.grad_buffer(s.id)[0] += to_s;
    });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    Graph& g = *logits.graph;
    const Tensor& L = g.value(logits);
    if (L.rank() != 2 || L.rows() != labels.size()) {
        throw ShapeMismatch("cross_entropy: logits rows do not match label count");
    }
    const std::size_t n = L.rows(), k = L.cols();
    std::vector<int> y(labels.begin(), labels.end());
    std::vector<double> probs(n * k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k) {
            throw std::out_of_range("cross_entropy: label out of range");
        }
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) hi = std::max(hi, L[i * k + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(L[i * k + c] - hi);
        const double lse = hi + std::log(z);
        for (std::size_t c = 0; c < k; ++c) probs[i * k + c] = std::exp(L[i * k + c] - lse);
        total += lse - L[i * k + static_cast<std::size_t>(y[i])];
    }
    return g.record(Tensor::scalar(total / static_cast<double>(n)), {logits.id},
                    [logits, n, k, y = std::move(y), probs = std::move(probs)](Graph& g,
                                                                               std::size_t self) {
                        const double u = g.upstream(self)[0] / static_cast<double>(n);
                        auto& gl = g.grad_buffer(logits.id);
                        for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t c = 0; c < k; ++c) {
                                const double target =
                                    static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0;
                                gl[i * k + c] += u * (probs[i * k + c] - target);
                            }
                        }
                    });
}

// ----- finite differences -----

double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw std::invalid_argument("finite_diff_check: eps must lie in [1e-7, 1e-3]");
    }
    std::vector<std::vector<double>> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(g.variable(t));
        Var loss = f(g, vars);
        g.backward(loss);
        for (auto v : vars) analytic.push_back(g.grad(v));
    }
    auto evaluate = [&](const std::vector<Tensor>& xs) {
        Graph g;
        std::vector<Var> vars;
        for (const auto& t : xs) vars.push_back(g.constant(t));
        return f(g, vars).item();
    };
    double worst = 0.0;
    std::vector<Tensor> probe = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const double x0 = inputs[t][i];
            probe[t][i] = x0 + eps;
            const double up = evaluate(probe);
            probe[t][i] = x0 - eps;
            const double down = evaluate(probe);
            probe[t][i] = x0;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[t][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps) {
    return finite_diff_check(
        [&f](Graph& g, std::span<const Var> vs) { return f(g, vs[0]); }, std::vector<Tensor>{x},
        eps);
}

}  // namespace hclr
