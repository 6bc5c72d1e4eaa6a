#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hclr {

/// Dense row-major array of doubles, rank 0 (scalar), 1 or 2.
class Tensor {
   public:
    Tensor() : values_(1, 0.0) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor zeros(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    /// Rank-1 tensors behave as a single row.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values_).subspan(r * cols(), cols());
    }

    double item() const;
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

   private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    double item() const { return value().item(); }
};

/// Append-only tape. Nodes are stored in creation order, which is a valid
/// topological order; backward walks it in reverse.
class Graph {
   public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var variable(Tensor value);
    Var constant(Tensor value);

    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient of the last backward() w.r.t. this node; zeros if untouched.
    std::vector<double> grad(Var v) const;
    /// Mutable gradient accumulator used by backward functions.
    std::vector<double>& grad_buffer(std::size_t id);
    const std::vector<double>& upstream(std::size_t id) const { return nodes_[id].grad; }

    void backward(Var loss);
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }

   private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// ----- operations -----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (r x c) plus a rank-1 c-vector broadcast over rows.
Var add_row(Var a, Var row);
/// a (r x c) times a rank-1 c-vector broadcast over rows.
Var mul_row(Var a, Var row);
/// v minus a scalar node broadcast over all entries.
Var sub_scalar(Var v, Var s);
Var scale(Var a, double factor);

/// a (r x k) times b (k x c).
Var matmul(Var a, Var b);
/// a (r x k) times b^T where b is (c x k).
Var matmul_nt(Var a, Var b);
/// a (r x c) times rank-1 c-vector, giving a rank-1 r-vector.
Var matvec(Var a, Var v);
/// x W^T + b with W (out x in) and b rank-1 of length out.
Var linear(Var x, Var weight, Var bias);

Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);

Var sum(Var a);
Var mean(Var a);

/// Row i of a rank-2 tensor as a rank-1 vector.
Var row(Var a, std::size_t i);
/// Stack rows of a on top of rows of b.
Var concat_rows(Var a, Var b);
Var reshape(Var a, std::vector<std::size_t> shape);
/// Selected entries of a rank-1 vector.
Var gather(Var v, std::span<const std::size_t> indices);

/// Rows (or the whole rank-1 vector) scaled to unit Euclidean norm.
/// Throws ZeroNormRow when a row norm is <= 1e-12.
Var l2_normalize(Var a);
/// softmax(scale * v), rank-1 or row-wise on rank-2.
Var softmax(Var v, double scale = 1.0);
/// log sum_{j != skip} exp(v_j) over a rank-1 vector. Pass skip >= size to
/// include every entry.
Var logsumexp_except(Var v, std::size_t skip);
/// Max entry of a rank-1 vector; gradient routes to the first maximizer.
Var max_reduce(Var v);
/// Elementwise max(v_j, s) for a scalar node s; ties route to v.
Var maximum_scalar(Var v, Var s);
/// Mean softmax cross-entropy of logits (r x k) against integer labels.
Var cross_entropy(Var logits, std::span<const int> labels);

Var add_n(std::span<const Var> terms);

// ----- checking -----

using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Max over coordinates of |analytic - central difference| /
/// max(1, |analytic|, |numeric|). eps must lie in [1e-7, 1e-3].
double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5);
double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x,
                         double eps = 1e-5);

}  // namespace hclr
