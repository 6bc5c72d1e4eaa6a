#include "hclr/attention.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "hclr/errors.hpp"
#include "hclr/rng.hpp"

namespace hclr {

std::vector<AttentionHead> init_heads(std::size_t d, std::size_t levels, HeadInit scheme,
                                      std::uint64_t seed) {
    if (d < 1 || levels < 1) throw std::invalid_argument("init_heads needs d >= 1 and levels >= 1");
    std::vector<AttentionHead> heads;
    for (std::size_t h = 0; h < levels; ++h) {
        AttentionHead head{static_cast<int>(h + 1), Tensor::zeros({d, d}), Tensor::zeros({d}),
                           Tensor::zeros({d, d}), Tensor::zeros({d})};
        if (scheme == HeadInit::scaled_gaussian) {
            std::mt19937_64 rng(derive_seed({seed, h}));
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
            for (auto& w : head.q_weight.data()) w = dist(rng);
            for (auto& w : head.k_weight.data()) w = dist(rng);
        }
        heads.push_back(std::move(head));
    }
    return heads;
}

BoundHead bind(Graph& g, const AttentionHead& head, bool trainable) {
    auto make = [&](const Tensor& t) { return trainable ? g.variable(t) : g.constant(t); };
    return BoundHead{head.level, make(head.q_weight), make(head.q_bias), make(head.k_weight),
                     make(head.k_bias)};
}

Var attention_weights(const BoundHead& head, Var z) {
    const Tensor& zv = z.value();
    const std::size_t d = head.q_bias.value().size();
    if (zv.cols() != d) throw ShapeMismatch("attention head dimension does not match embedding");
    const bool vector_input = zv.rank() == 1;
    Var x = vector_input ? reshape(z, {1, d}) : z;
    Var q = linear(x, head.q_weight, head.q_bias);
    Var k = linear(x, head.k_weight, head.k_bias);
    Var w = softmax(mul(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    return vector_input ? reshape(w, {d}) : w;
}

Var apply_soft_mask(Var z, Var weights) { return l2_normalize(mul(z, weights)); }

Tensor attention_weights(const AttentionHead& head, const Tensor& z) {
    Graph g;
    return attention_weights(bind(g, head, false), g.constant(z)).value();
}

}  // namespace hclr
