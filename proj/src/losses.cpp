#include "hclr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "hclr/errors.hpp"

namespace hclr {

HierLabels apply_order(const HierLabels& labels, HierarchyOrder order) {
    if (order == HierarchyOrder::category_first) return labels;
    return HierLabels{{labels.levels.rbegin(), labels.levels.rend()}};
}

namespace {

void check_batch(const EmbeddingBatch& b) {
    if (b.anchors.graph == nullptr) throw std::invalid_argument("batch has no anchor embeddings");
    const Tensor& a = b.anchors.value();
    if (a.rank() != 2 || a.rows() != b.size()) {
        throw ShapeMismatch("anchor rows must match the label count");
    }
    if (b.size() < 2) throw std::invalid_argument("contrastive batches need N >= 2");
    if (b.views && b.views->value().shape() != a.shape()) {
        throw ShapeMismatch("views must match the anchor shape");
    }
    const std::size_t depth = b.depth();
    if (depth < 1) throw std::invalid_argument("labels need at least one level");
    for (const auto& l : b.labels) {
        if (l.depth() != depth) throw std::invalid_argument("all labels must share one depth");
    }
    auto check_rows = [](const Tensor& t) {
        for (std::size_t r = 0; r < t.rows(); ++r) {
            double ss = 0.0;
            for (double x : t.row(r)) ss += x * x;
            if (std::abs(std::sqrt(ss) - 1.0) > 1e-9) {
                throw std::invalid_argument("embedding row " + std::to_string(r) + " is not unit norm");
            }
        }
    };
    check_rows(a);
    if (b.views) check_rows(b.views->value());
}

void check_level(const EmbeddingBatch& b, std::size_t level) {
    if (level < 1 || level > b.depth()) {
        throw std::out_of_range("level " + std::to_string(level) + " outside [1," +
                                std::to_string(b.depth()) + "]");
    }
}

Var collection(const EmbeddingBatch& b) {
    return b.views ? concat_rows(b.anchors, *b.views) : b.anchors;
}

Var mask_constant(Graph& g, const LevelMask& mask, std::size_t d) {
    if (mask.weights.size() != d) throw ShapeMismatch("mask length does not match embedding dimension");
    return g.constant(Tensor::vector(mask.weights));
}

/// Temperature-scaled similarity row of one entry against the whole
/// collection at one loss level.
using RowSource = std::function<Var(std::size_t entry, std::size_t loss_level)>;

/// Shared skeleton of every loss in the family:
///   1/L sum_t sum_i -lambda_t / |P_t(i)| sum_{p in P_t(i)} term(i, p, t)
/// where loss level t uses label level label_levels[t - 1] and term is the
/// pair loss, lifted to the coarser level's best pair loss when enforcing.
Var contrastive_sum(const EmbeddingBatch& b, const RowSource& rows,
                    const std::vector<std::size_t>& label_levels, const std::vector<double>& lambdas,
                    bool enforce) {
    const std::size_t levels = label_levels.size();
    const std::size_t entries = b.entries();

    std::vector<std::vector<std::vector<std::size_t>>> positives(levels);
    bool any = false;
    for (std::size_t t = 0; t < levels; ++t) {
        positives[t].resize(entries);
        for (std::size_t i = 0; i < entries; ++i) {
            positives[t][i] = positive_set(b, i, label_levels[t]);
            any = any || !positives[t][i].empty();
        }
    }
    if (!any) throw DegenerateBatch("no anchor has a positive at any level");

    std::map<std::pair<std::size_t, std::size_t>, Var> pair_cache;
    auto pair_terms = [&](std::size_t i, std::size_t t) {
        auto key = std::make_pair(i, t);
        if (auto it = pair_cache.find(key); it != pair_cache.end()) return it->second;
        Var r = rows(i, t + 1);
        Var terms = sub_scalar(gather(r, positives[t][i]), logsumexp_except(r, i));
        pair_cache.emplace(key, terms);
        return terms;
    };

    std::vector<Var> parts;
    for (std::size_t t = levels; t-- > 0;) {
        for (std::size_t i = 0; i < entries; ++i) {
            const auto& pos = positives[t][i];
            if (pos.empty()) continue;
            Var terms = pair_terms(i, t);
            if (enforce && t > 0 && !positives[t - 1][i].empty()) {
                terms = maximum_scalar(terms, max_reduce(pair_terms(i, t - 1)));
            }
            const double w = -lambdas[t] / (static_cast<double>(levels) * static_cast<double>(pos.size()));
            parts.push_back(scale(sum(terms), w));
        }
    }
    return add_n(parts);
}

std::vector<std::size_t> all_levels(const EmbeddingBatch& b) {
    std::vector<std::size_t> out(b.depth());
    for (std::size_t h = 0; h < out.size(); ++h) out[h] = h + 1;
    return out;
}

std::vector<double> lambdas_for(std::size_t depth, LambdaMode mode) {
    std::vector<double> out(depth);
    for (std::size_t h = 1; h <= depth; ++h) out[h - 1] = lambda_weight(h, depth, mode);
    return out;
}

RowSource shared_rows(Var z, double tau) {
    Var sims = scale(matmul_nt(z, z), 1.0 / tau);
    return [sims](std::size_t entry, std::size_t) { return row(sims, entry); };
}

void check_tau(const LossConfig& cfg) {
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("tau must be positive");
}

std::vector<double> configured_lambdas(const EmbeddingBatch& b, const LossConfig& cfg) {
    if (cfg.lambdas.empty()) return lambdas_for(b.depth(), cfg.lambda_mode);
    if (cfg.lambdas.size() != b.depth()) {
        throw std::invalid_argument("explicit lambdas need one weight per level");
    }
    return cfg.lambdas;
}

}  // namespace

std::vector<std::size_t> contrast_set(const EmbeddingBatch& batch, std::size_t i, std::size_t level) {
    check_level(batch, level);
    if (i >= batch.entries()) throw std::out_of_range("entry index out of range");
    std::vector<std::size_t> out;
    out.reserve(batch.entries() - 1);
    for (std::size_t a = 0; a < batch.entries(); ++a) {
        if (a != i) out.push_back(a);
    }
    return out;
}

std::vector<std::size_t> positive_set(const EmbeddingBatch& batch, std::size_t i, std::size_t level) {
    check_level(batch, level);
    if (i >= batch.entries()) throw std::out_of_range("entry index out of range");
    const int label = batch.labels[batch.sample_of(i)].at(level);
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < batch.entries(); ++a) {
        if (a != i && batch.labels[batch.sample_of(a)].at(level) == label) out.push_back(a);
    }
    return out;
}

double lambda_weight(std::size_t level, std::size_t depth, LambdaMode mode) {
    if (level < 1 || level > depth) throw std::out_of_range("lambda level outside [1, H]");
    if (mode == LambdaMode::linear) {
        return static_cast<double>(depth - level + 1) / static_cast<double>(depth);
    }
    return std::ldexp(1.0, static_cast<int>(depth - level)) / std::ldexp(1.0, static_cast<int>(depth - 1));
}

Var pair_loss(const EmbeddingBatch& batch, std::size_t i, std::size_t p, std::size_t level,
              const LossConfig& cfg, const LevelMask* mask) {
    check_batch(batch);
    check_tau(cfg);
    const auto pos = positive_set(batch, i, level);
    const auto where = std::find(pos.begin(), pos.end(), p);
    if (where == pos.end()) throw std::invalid_argument("p is not a positive of i at this level");
    Var z = collection(batch);
    if (mask) {
        if (mask->empty()) throw EmptyMask("hard mask selects no feature");
        z = l2_normalize(mul_row(z, mask_constant(*z.graph, *mask, z.value().cols())));
    }
    Var sims = scale(matvec(z, row(z, i)), 1.0 / cfg.tau);
    const std::size_t idx[] = {p};
    return sub_scalar(reshape(gather(sims, idx), {}), logsumexp_except(sims, i));
}

Var supcon_loss(const EmbeddingBatch& batch, const LossConfig& cfg, std::size_t level) {
    check_batch(batch);
    check_tau(cfg);
    check_level(batch, level);
    return contrastive_sum(batch, shared_rows(collection(batch), cfg.tau), {level}, {1.0}, false);
}

Var hmc_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
    check_batch(batch);
    check_tau(cfg);
    return contrastive_sum(batch, shared_rows(collection(batch), cfg.tau), all_levels(batch),
                           configured_lambdas(batch, cfg), false);
}

Var hmce_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
    check_batch(batch);
    check_tau(cfg);
    return contrastive_sum(batch, shared_rows(collection(batch), cfg.tau), all_levels(batch),
                           configured_lambdas(batch, cfg), true);
}

Var ghmlc_loss(const EmbeddingBatch& batch, const LossConfig& cfg,
               const std::vector<std::vector<LevelMask>>& masks, LossDiagnostics* diag) {
    check_batch(batch);
    check_tau(cfg);
    if (cfg.lambda_mode != LambdaMode::linear) {
        throw std::invalid_argument("G-HMLC uses linear lambda scaling");
    }
    const std::size_t depth = batch.depth();
    if (masks.size() != batch.size()) throw std::invalid_argument("need one mask set per sample");
    for (const auto& m : masks) {
        if (m.size() != depth) throw std::invalid_argument("need one mask per level");
        for (const auto& lm : m) {
            if (lm.kind != MaskKind::hard) throw std::invalid_argument("G-HMLC masks must be hard");
        }
    }

    Var z = collection(batch);
    Graph& g = *z.graph;
    const std::size_t d = z.value().cols();
    const double inv_tau = 1.0 / cfg.tau;
    const LevelMask full = LevelMask::all_ones(1, d);

    // Masked collection per (sample, level); an anchor and its view share it.
    std::map<std::pair<std::size_t, std::size_t>, Var> masked;
    std::size_t fallbacks = 0;
    auto masked_collection = [&](std::size_t sample, std::size_t level) {
        auto key = std::make_pair(sample, level);
        if (auto it = masked.find(key); it != masked.end()) return it->second;
        const LevelMask* m = &masks[sample][level - 1];
        if (m->empty()) {
            m = &full;
            ++fallbacks;
        }
        Var zm = l2_normalize(mul_row(z, mask_constant(g, *m, d)));
        masked.emplace(key, zm);
        return zm;
    };
    RowSource rows = [&](std::size_t entry, std::size_t level) {
        Var zm = masked_collection(batch.sample_of(entry), level);
        return scale(matvec(zm, row(zm, entry)), inv_tau);
    };
    Var loss = contrastive_sum(batch, rows, all_levels(batch), lambdas_for(depth, LambdaMode::linear), true);
    if (diag) diag->empty_mask_fallbacks += fallbacks;
    return loss;
}

Var ahmlc_loss(const EmbeddingBatch& batch, const LossConfig& cfg, std::span<const BoundHead> heads) {
    check_batch(batch);
    check_tau(cfg);
    if (cfg.lambda_mode != LambdaMode::linear) {
        throw std::invalid_argument("A-HMLC uses linear lambda scaling");
    }
    const std::size_t depth = batch.depth();
    if (heads.size() != depth) throw std::invalid_argument("need one attention head per level");

    Var z = collection(batch);
    std::vector<Var> sims;
    for (std::size_t h = 0; h < depth; ++h) {
        Var zh = apply_soft_mask(z, attention_weights(heads[h], z));
        sims.push_back(scale(matmul_nt(zh, zh), 1.0 / cfg.tau));
    }
    RowSource rows = [&sims](std::size_t entry, std::size_t level) { return row(sims[level - 1], entry); };
    return contrastive_sum(batch, rows, all_levels(batch), lambdas_for(depth, LambdaMode::linear), true);
}

}  // namespace hclr
