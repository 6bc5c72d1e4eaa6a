#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hclr/attention.hpp"
#include "hclr/data.hpp"
#include "hclr/losses.hpp"
#include "hclr/tensor.hpp"

namespace hclr {

// ----- encoder -----

enum class Activation { relu, tanh };

struct EncoderSpec {
    std::size_t input_dim = 32;
    std::vector<std::size_t> hidden_dims{128, 64};
    std::size_t embed_dim = 32;
    Activation activation = Activation::relu;
    std::uint64_t seed = 1;
};

/// Layer l maps width l to width l + 1; weights are (out x in).
struct EncoderParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

EncoderParams init_encoder(const EncoderSpec& spec);

struct BoundEncoder {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

BoundEncoder bind(Graph& g, const EncoderParams& params, bool trainable = true);

/// MLP output before normalization; x is one flattened input or n rows.
Var encode_raw(const EncoderSpec& spec, const BoundEncoder& enc, Var x);
/// Unit-norm embedding(s).
Var encode(const EncoderSpec& spec, const BoundEncoder& enc, Var x);
/// Unit-norm embeddings of every sample, one row each.
Tensor embed_dataset(const EncoderSpec& spec, const EncoderParams& params, const Dataset& data);

// ----- optimizers -----

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
   public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}
    /// One update of every parameter from its gradient.
    void step(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads);

   private:
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// ----- training -----

enum class LossKind { cross_entropy, supcon, hmc, hmce, ghmlc, ahmlc };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);
std::string to_string(HierarchyOrder order);

struct TrainConfig {
    LossKind loss_kind = LossKind::hmce;
    int epochs = 40;
    std::size_t batch_size = 128;
    OptimizerConfig optimizer;
    LossConfig loss;
    /// Dataset level used by supcon; 0 means the finest. Unaffected by the
    /// hierarchy order.
    std::size_t supcon_level = 0;
    int gmm_refit_interval = 1;
    int em_max_iters = 100;
    double em_tol = 1e-6;
    HeadInit head_init = HeadInit::scaled_gaussian;
    double augment_strength = 0.5;
    AugmentParams augment;
    std::uint64_t seed = 1;
};

struct Model {
    EncoderParams encoder;
    std::vector<AttentionHead> heads;  // ahmlc only
    Tensor classifier_weight;          // cross_entropy only, (classes x d)
    Tensor classifier_bias;
};

struct TrainDiagnostics {
    std::size_t empty_mask_fallbacks = 0;
    std::size_t em_fits = 0;
    std::size_t em_iterations = 0;
    std::size_t steps = 0;
};

struct TrainResult {
    Model model;
    std::vector<double> epoch_losses;  // mean batch loss per epoch
    TrainDiagnostics diagnostics;
};

/// Seeded 80/20 partition shared by training and the linear probe, so the
/// probe's held-out samples are never seen by the encoder.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
Split split_indices(std::size_t n, std::uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

/// Trains on the given samples. Throws DivergenceError on a non-finite loss.
TrainResult train(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg);

// ----- evaluation -----

struct LevelMetrics {
    std::size_t level = 1;
    double probe_accuracy = 0.0;
    double silhouette = 0.0;
};

struct RunReport {
    std::string loss;
    std::string hierarchy_order;
    std::uint64_t seed = 0;
    std::vector<double> epoch_losses;
    std::vector<LevelMetrics> levels;
    double variance_explained = 0.0;
    TrainDiagnostics diagnostics;
    std::vector<std::int64_t> ids;
    Tensor embeddings;  // all samples, rows in dataset order
    Tensor projection;  // 2D PCA of the embeddings
};

/// Trains on the seed's training split and evaluates every level on frozen
/// embeddings of the full dataset.
RunReport run_experiment(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg);

struct ProbeOptions {
    int steps = 500;
    double learning_rate = 0.1;
};

/// Held-out accuracy of softmax regression on frozen embeddings.
double linear_probe(const Tensor& embeddings, const std::vector<int>& labels, std::uint64_t split_seed,
                    const ProbeOptions& options = {});

/// Mean silhouette with Euclidean distance.
double silhouette(const Tensor& embeddings, const std::vector<int>& labels);

struct Projection {
    Tensor coords;  // n x k
    double variance_explained = 0.0;
};

Projection pca_project(const Tensor& embeddings, std::size_t k = 2);

struct OrderAblation {
    RunReport class_first;
    RunReport category_first;
    /// Finest-level probe accuracy, class_first minus category_first.
    double gap = 0.0;
};

OrderAblation order_ablation(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg);

}  // namespace hclr
