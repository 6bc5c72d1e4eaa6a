#pragma once

#include <cstdint>
#include <vector>

#include "hclr/tensor.hpp"

namespace hclr {

/// Per-level feature attention: query and key are single linear layers on
/// the embedding, and the weights are softmax((Qz * Kz) / sqrt(d)) over the
/// d feature positions.
struct AttentionHead {
    int level = 1;
    Tensor q_weight;  // d x d
    Tensor q_bias;    // d
    Tensor k_weight;  // d x d
    Tensor k_bias;    // d

    std::size_t dim() const { return q_bias.size(); }
};

enum class HeadInit { zeros, scaled_gaussian };

/// Zeros give exactly uniform attention; scaled_gaussian draws weights with
/// std 1/sqrt(d) and zero biases.
std::vector<AttentionHead> init_heads(std::size_t d, std::size_t levels, HeadInit scheme,
                                      std::uint64_t seed);

/// Head parameters recorded on a graph.
struct BoundHead {
    int level = 1;
    Var q_weight, q_bias, k_weight, k_bias;
};

BoundHead bind(Graph& g, const AttentionHead& head, bool trainable = true);

/// Attention weights for a rank-1 embedding or row-wise for an n x d matrix.
Var attention_weights(const BoundHead& head, Var z);
/// renormalize(weights * z); throws ZeroNormRow on a vanishing product.
Var apply_soft_mask(Var z, Var weights);

/// Convenience forward without a caller-owned graph.
Tensor attention_weights(const AttentionHead& head, const Tensor& z);

}  // namespace hclr
