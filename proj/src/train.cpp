#include "hclr/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hclr/errors.hpp"
#include "hclr/gmm.hpp"
#include "hclr/rng.hpp"

namespace hclr {

// ----- encoder -----

EncoderParams init_encoder(const EncoderSpec& spec) {
    if (spec.input_dim < 1 || spec.embed_dim < 1) throw ConfigError("encoder dimensions must be positive");
    std::vector<std::size_t> widths{spec.input_dim};
    widths.insert(widths.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    widths.push_back(spec.embed_dim);
    EncoderParams p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l], out = widths[l + 1];
        if (in < 1 || out < 1) throw ConfigError("encoder layer widths must be positive");
        const double gain = spec.activation == Activation::relu ? 2.0 : 1.0;
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(in)));
        std::mt19937_64 rng(derive_seed({spec.seed, 0xe7c0, l}));
        std::vector<double> w(in * out);
        for (auto& x : w) x = dist(rng);
        p.weights.push_back(Tensor::matrix(out, in, std::move(w)));
        p.biases.push_back(Tensor::zeros({out}));
    }
    return p;
}

BoundEncoder bind(Graph& g, const EncoderParams& params, bool trainable) {
    BoundEncoder b;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        b.weights.push_back(trainable ? g.variable(params.weights[l]) : g.constant(params.weights[l]));
        b.biases.push_back(trainable ? g.variable(params.biases[l]) : g.constant(params.biases[l]));
    }
    return b;
}

Var encode_raw(const EncoderSpec& spec, const BoundEncoder& enc, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() == 0 || xv.cols() != spec.input_dim) {
        throw ShapeMismatch("encoder expects " + std::to_string(spec.input_dim) + " input features, got " +
                            std::to_string(xv.cols()));
    }
    const bool single = xv.rank() == 1;
    Var h = single ? reshape(x, {1, spec.input_dim}) : x;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        h = linear(h, enc.weights[l], enc.biases[l]);
        if (l + 1 < enc.weights.size()) h = spec.activation == Activation::relu ? relu(h) : tanh(h);
    }
    return single ? reshape(h, {spec.embed_dim}) : h;
}

Var encode(const EncoderSpec& spec, const BoundEncoder& enc, Var x) {
    return l2_normalize(encode_raw(spec, enc, x));
}

namespace {

Tensor stack_features(const std::vector<Sample>& samples) {
    const std::size_t f = samples.front().features.size();
    std::vector<double> v;
    v.reserve(samples.size() * f);
    for (const auto& s : samples) {
        if (s.features.size() != f) throw ShapeMismatch("samples have differing feature sizes");
        v.insert(v.end(), s.features.values().begin(), s.features.values().end());
    }
    return Tensor::matrix(samples.size(), f, std::move(v));
}

}  // namespace

Tensor embed_dataset(const EncoderSpec& spec, const EncoderParams& params, const Dataset& data) {
    if (data.size() == 0) throw EmptyDataset("cannot embed an empty dataset");
    Graph g;
    auto enc = bind(g, params, false);
    return encode(spec, enc, g.constant(stack_features(data.samples))).value();
}

// ----- optimizers -----

void Optimizer::step(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("one gradient per parameter");
    if (m_.empty()) {
        for (auto* p : params) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }
    ++t_;
    const double lr = cfg_.learning_rate;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k]->data();
        const auto& gk = grads[k];
        auto& m = m_[k];
        if (cfg_.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = cfg_.momentum * m[j] + gk[j];
                w[j] -= lr * m[j];
            }
            continue;
        }
        auto& v = v_[k];
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gk[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gk[j] * gk[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
        }
    }
}

// ----- training -----

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::supcon: return "supcon";
        case LossKind::hmc: return "hmc";
        case LossKind::hmce: return "hmce";
        case LossKind::ghmlc: return "ghmlc";
        case LossKind::ahmlc: return "ahmlc";
    }
    return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
    for (auto k : {LossKind::cross_entropy, LossKind::supcon, LossKind::hmc, LossKind::hmce, LossKind::ghmlc,
                   LossKind::ahmlc}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown loss kind '" + name + "'");
}

std::string to_string(HierarchyOrder order) {
    return order == HierarchyOrder::category_first ? "category_first" : "class_first";
}

Split split_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed({seed, 0x5b17}));
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n_train = (n * 4) / 5;
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.depth = data.depth;
    for (auto i : indices) out.samples.push_back(data.samples.at(i));
    return out;
}

namespace {

void check_config(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg) {
    if (data.size() == 0) throw EmptyDataset("training needs samples");
    if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(cfg.optimizer.learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
    if (cfg.gmm_refit_interval < 1) throw ConfigError("gmm_refit_interval must be positive");
    if (cfg.augment_strength < 0.0 || cfg.augment_strength > 1.0) {
        throw ConfigError("augment_strength must lie in [0, 1]");
    }
    if (data.feature_size() != enc.input_dim) {
        throw ShapeMismatch("dataset has " + std::to_string(data.feature_size()) + " features, encoder expects " +
                            std::to_string(enc.input_dim));
    }
    if (enc.embed_dim < data.depth) throw ConfigError("embed_dim must be at least the hierarchy depth");
    if (cfg.supcon_level > data.depth) throw ConfigError("supcon_level exceeds the hierarchy depth");
}

struct GmmCacheEntry {
    std::vector<Point2> means;
    std::vector<LevelMask> masks;
    long visits = 0;
};

}  // namespace

TrainResult train(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg) {
    check_config(data, enc, cfg);
    const std::size_t depth = data.depth;
    const std::size_t d = enc.embed_dim;

    TrainResult result;
    Model& model = result.model;
    model.encoder = init_encoder(enc);
    if (cfg.loss_kind == LossKind::ahmlc) {
        model.heads = init_heads(d, depth, cfg.head_init, derive_seed({cfg.seed, 0x4ead}));
    }
    std::vector<int> fine_ids;
    if (cfg.loss_kind == LossKind::cross_entropy) {
        fine_ids = data.labels_at(depth);
        std::sort(fine_ids.begin(), fine_ids.end());
        fine_ids.erase(std::unique(fine_ids.begin(), fine_ids.end()), fine_ids.end());
        std::mt19937_64 rng(derive_seed({cfg.seed, 0xc1a5}));
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
        std::vector<double> w(fine_ids.size() * d);
        for (auto& x : w) x = dist(rng);
        model.classifier_weight = Tensor::matrix(fine_ids.size(), d, std::move(w));
        model.classifier_bias = Tensor::zeros({fine_ids.size()});
    }

    std::vector<Tensor*> params;
    for (auto& w : model.encoder.weights) params.push_back(&w);
    for (auto& b : model.encoder.biases) params.push_back(&b);
    for (auto& h : model.heads) {
        params.insert(params.end(), {&h.q_weight, &h.q_bias, &h.k_weight, &h.k_bias});
    }
    if (cfg.loss_kind == LossKind::cross_entropy) {
        params.push_back(&model.classifier_weight);
        params.push_back(&model.classifier_bias);
    }

    Optimizer opt(cfg.optimizer);
    std::map<std::int64_t, GmmCacheEntry> gmm_cache;
    const std::size_t supcon_level = cfg.supcon_level == 0 ? depth : cfg.supcon_level;
    const EmOptions em_base{cfg.em_max_iters, cfg.em_tol, 0};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchIterator it(data, cfg.batch_size, derive_seed({cfg.seed, 0xba7c}), epoch, cfg.augment_strength,
                         cfg.augment);
        double epoch_total = 0.0;
        int batches = 0;
        while (auto batch = it.next()) {
            Graph g;
            BoundEncoder be = bind(g, model.encoder, true);
            std::vector<Var> head_vars;
            std::vector<BoundHead> heads;
            for (const auto& h : model.heads) {
                heads.push_back(bind(g, h, true));
                head_vars.insert(head_vars.end(),
                                 {heads.back().q_weight, heads.back().q_bias, heads.back().k_weight,
                                  heads.back().k_bias});
            }

            Var xa = g.constant(stack_features(batch->anchors));
            Var xv = g.constant(stack_features(batch->views));
            std::vector<HierLabels> labels;
            for (const auto& s : batch->anchors) labels.push_back(s.labels);

            Var loss;
            Var cw, cb;
            if (cfg.loss_kind == LossKind::cross_entropy) {
                cw = g.variable(model.classifier_weight);
                cb = g.variable(model.classifier_bias);
                Var raw = concat_rows(encode_raw(enc, be, xa), encode_raw(enc, be, xv));
                std::vector<int> targets;
                for (int pass = 0; pass < 2; ++pass) {
                    for (const auto& l : labels) {
                        auto pos = std::lower_bound(fine_ids.begin(), fine_ids.end(), l.at(depth));
                        targets.push_back(static_cast<int>(pos - fine_ids.begin()));
                    }
                }
                loss = cross_entropy(linear(raw, cw, cb), targets);
            } else {
                Var za = encode(enc, be, xa);
                Var zv = encode(enc, be, xv);
                if (cfg.loss_kind == LossKind::supcon) {
                    loss = supcon_loss(EmbeddingBatch{za, zv, labels}, cfg.loss, supcon_level);
                } else {
                    std::vector<HierLabels> ordered;
                    for (const auto& l : labels) ordered.push_back(apply_order(l, cfg.loss.hierarchy_order));
                    EmbeddingBatch eb{za, zv, ordered};
                    switch (cfg.loss_kind) {
                        case LossKind::hmc: loss = hmc_loss(eb, cfg.loss); break;
                        case LossKind::hmce: loss = hmce_loss(eb, cfg.loss); break;
                        case LossKind::ahmlc: loss = ahmlc_loss(eb, cfg.loss, heads); break;
                        case LossKind::ghmlc: {
                            std::vector<std::vector<LevelMask>> masks;
                            for (std::size_t i = 0; i < batch->anchors.size(); ++i) {
                                auto& entry = gmm_cache[batch->anchors[i].id];
                                if (entry.masks.empty() || entry.visits % cfg.gmm_refit_interval == 0) {
                                    auto pts = build_feature_points(za.value().row(i), zv.value().row(i));
                                    EmOptions eo = em_base;
                                    eo.seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(batch->anchors[i].id)});
                                    std::optional<std::vector<Point2>> warm;
                                    if (!entry.means.empty()) warm = entry.means;
                                    auto fit = em_fit(pts, depth, warm, eo);
                                    entry.means = fit.state.means;
                                    entry.masks = predict_masks(fit.state, pts);
                                    ++result.diagnostics.em_fits;
                                    result.diagnostics.em_iterations += static_cast<std::size_t>(fit.iterations);
                                }
                                ++entry.visits;
                                masks.push_back(entry.masks);
                            }
                            LossDiagnostics diag;
                            loss = ghmlc_loss(eb, cfg.loss, masks, &diag);
                            result.diagnostics.empty_mask_fallbacks += diag.empty_mask_fallbacks;
                            break;
                        }
                        default: throw std::logic_error("unhandled loss kind");
                    }
                }
            }

            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                          std::to_string(batches),
                                      epoch, batches);
            }
            g.backward(loss);
            std::vector<std::vector<double>> grads;
            for (auto v : be.weights) grads.push_back(g.grad(v));
            for (auto v : be.biases) grads.push_back(g.grad(v));
            for (auto v : head_vars) grads.push_back(g.grad(v));
            if (cfg.loss_kind == LossKind::cross_entropy) {
                grads.push_back(g.grad(cw));
                grads.push_back(g.grad(cb));
            }
            opt.step(params, grads);
            epoch_total += value;
            ++batches;
            ++result.diagnostics.steps;
        }
        if (batches == 0) throw EmptyDataset("no batch of at least two samples");
        result.epoch_losses.push_back(epoch_total / batches);
    }
    return result;
}

RunReport run_experiment(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg) {
    const Split split = split_indices(data.size(), cfg.seed);
    TrainResult tr = train(subset(data, split.train), enc, cfg);

    RunReport r;
    r.loss = to_string(cfg.loss_kind);
    r.hierarchy_order = to_string(cfg.loss.hierarchy_order);
    r.seed = cfg.seed;
    r.epoch_losses = tr.epoch_losses;
    r.diagnostics = tr.diagnostics;
    r.embeddings = embed_dataset(enc, tr.model.encoder, data);
    for (const auto& s : data.samples) r.ids.push_back(s.id);
    for (std::size_t h = 1; h <= data.depth; ++h) {
        const auto labels = data.labels_at(h);
        r.levels.push_back({h, linear_probe(r.embeddings, labels, cfg.seed), silhouette(r.embeddings, labels)});
    }
    Projection p = pca_project(r.embeddings, 2);
    r.projection = std::move(p.coords);
    r.variance_explained = p.variance_explained;
    return r;
}

OrderAblation order_ablation(const Dataset& data, const EncoderSpec& enc, const TrainConfig& cfg) {
    if (data.depth != 2) throw std::invalid_argument("order ablation needs a two-level hierarchy");
    TrainConfig a = cfg, b = cfg;
    a.loss.hierarchy_order = HierarchyOrder::class_first;
    b.loss.hierarchy_order = HierarchyOrder::category_first;
    OrderAblation out{run_experiment(data, enc, a), run_experiment(data, enc, b), 0.0};
    out.gap = out.class_first.levels.back().probe_accuracy - out.category_first.levels.back().probe_accuracy;
    return out;
}

}  // namespace hclr
