#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hclr/attention.hpp"
#include "hclr/data.hpp"
#include "hclr/mask.hpp"
#include "hclr/tensor.hpp"

namespace hclr {

enum class LambdaMode { linear, exponential };

/// category_first keeps the dataset order (level 1 = coarsest); class_first
/// reverses the levels before they reach the loss.
enum class HierarchyOrder { category_first, class_first };

struct LossConfig {
    double tau = 0.1;
    LambdaMode lambda_mode = LambdaMode::linear;
    HierarchyOrder hierarchy_order = HierarchyOrder::category_first;
    bool skip_empty_positive_anchors = true;
    /// Explicit per-level weights for HMC/HMCE; empty means lambda_mode.
    std::vector<double> lambdas;
};

/// Labels as the loss sees them under a hierarchy order.
HierLabels apply_order(const HierLabels& labels, HierarchyOrder order);

/// Unit-norm anchor rows and optional augmented views. The contrast
/// collection is the anchors followed by the views: entry j < N is anchor j,
/// entry N + j is the view of sample j.
struct EmbeddingBatch {
    Var anchors;
    std::optional<Var> views;
    std::vector<HierLabels> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t entries() const { return views ? 2 * size() : size(); }
    std::size_t depth() const { return labels.empty() ? 0 : labels[0].depth(); }
    std::size_t sample_of(std::size_t entry) const { return entry % size(); }
};

/// Every entry of the contrast collection except i.
std::vector<std::size_t> contrast_set(const EmbeddingBatch& batch, std::size_t i, std::size_t level);
/// Entries of contrast_set(i) sharing i's label at the given level.
std::vector<std::size_t> positive_set(const EmbeddingBatch& batch, std::size_t i, std::size_t level);

/// Linear: (H - h + 1) / H. Exponential: 2^(H - h) / 2^(H - 1).
double lambda_weight(std::size_t level, std::size_t depth, LambdaMode mode);

/// log( exp(z_i.z_p / tau) / sum_{a in A(i)} exp(z_i.z_a / tau) ), optionally
/// with every embedding replaced by renormalize(mask * z).
Var pair_loss(const EmbeddingBatch& batch, std::size_t i, std::size_t p, std::size_t level,
              const LossConfig& cfg, const LevelMask* mask = nullptr);

/// Sum over anchors of -1/|P(i)| sum_p pair_loss(i, p) at one label level.
Var supcon_loss(const EmbeddingBatch& batch, const LossConfig& cfg, std::size_t level = 1);

Var hmc_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

/// HMC with each pair term lifted to max(term, best pair term of the anchor
/// at the adjacent coarser level).
Var hmce_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

struct LossDiagnostics {
    std::size_t empty_mask_fallbacks = 0;
};

/// HMCE evaluated under per-sample hard masks: masks[k][h - 1] is sample k's
/// mask for level h. Empty masks fall back to all features and are counted.
Var ghmlc_loss(const EmbeddingBatch& batch, const LossConfig& cfg,
               const std::vector<std::vector<LevelMask>>& masks, LossDiagnostics* diag = nullptr);

/// HMCE where level-h similarities use renormalize(attention_h(z) * z).
Var ahmlc_loss(const EmbeddingBatch& batch, const LossConfig& cfg, std::span<const BoundHead> heads);

}  // namespace hclr
