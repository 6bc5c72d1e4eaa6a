#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hclr/errors.hpp"
#include "hclr/losses.hpp"
#include "loss_cases.hpp"
#include "oracle.hpp"

using namespace hclr;

namespace {

EmbeddingBatch plain_batch(Graph& g, std::size_t rows, std::size_t cols, std::vector<double> values,
                           std::vector<HierLabels> labels) {
    return EmbeddingBatch{g.constant(Tensor::matrix(rows, cols, std::move(values))), std::nullopt,
                          std::move(labels)};
}

LossConfig with_tau(double tau) {
    LossConfig cfg;
    cfg.tau = tau;
    return cfg;
}

}  // namespace

TEST_CASE("positive and contrast sets over the multiview collection") {
    Graph g;
    // labels (A,a), (A,b) with A=0, a=0, b=1
    EmbeddingBatch b{g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                     g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                     {HierLabels{{0, 0}}, HierLabels{{0, 1}}}};
    CHECK(positive_set(b, 0, 1) == std::vector<std::size_t>{1, 2, 3});
    CHECK(positive_set(b, 0, 2) == std::vector<std::size_t>{2});
    CHECK(contrast_set(b, 0, 2) == std::vector<std::size_t>{1, 2, 3});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t h = 1; h <= 2; ++h) {
            auto p = positive_set(b, i, h);
            CHECK(std::find(p.begin(), p.end(), i) == p.end());
            // the paired view always qualifies
            CHECK(std::find(p.begin(), p.end(), (i + 2) % 4) != p.end());
        }
    CHECK_THROWS_AS(positive_set(b, 0, 3), std::out_of_range);
}

TEST_CASE("lambda_weight definitions") {
    CHECK(lambda_weight(1, 2, LambdaMode::linear) == 1.0);
    CHECK(lambda_weight(2, 2, LambdaMode::linear) == 0.5);
    CHECK(lambda_weight(1, 1, LambdaMode::linear) == 1.0);
    CHECK(lambda_weight(1, 1, LambdaMode::exponential) == 1.0);
    CHECK(lambda_weight(1, 3, LambdaMode::exponential) == 1.0);
    CHECK(lambda_weight(2, 3, LambdaMode::exponential) == 0.5);
    CHECK(lambda_weight(3, 3, LambdaMode::exponential) == 0.25);
    for (std::size_t H = 1; H <= 5; ++H)
        for (std::size_t h = 1; h <= H; ++h)
            for (auto mode : {LambdaMode::linear, LambdaMode::exponential}) {
                const double l = lambda_weight(h, H, mode);
                CHECK((l > 0.0 && l <= 1.0));
                if (h > 1) CHECK(l < lambda_weight(h - 1, H, mode));
            }
    CHECK_THROWS_AS(lambda_weight(0, 2, LambdaMode::linear), std::out_of_range);
}

TEST_CASE("pair_loss examples") {
    Graph g;
    const double s = 1.0 / std::sqrt(2.0);
    auto b = plain_batch(g, 3, 2, {s, s, s, s, s, s}, {HierLabels{{0}}, HierLabels{{0}}, HierLabels{{1}}});
    CHECK(pair_loss(b, 0, 1, 1, with_tau(0.3)).item() == doctest::Approx(std::log(0.5)).epsilon(1e-14));

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto c = test::random_case(rng);
        Graph h;
        auto batch = test::make_batch(h, c);
        auto pos = positive_set(batch, 0, 1);
        if (pos.empty()) continue;
        const LossConfig cfg = with_tau(c.tau);
        const auto ones = LevelMask::all_ones(1, c.d);
        const double plain = pair_loss(batch, 0, pos[0], 1, cfg).item();
        CHECK(std::abs(pair_loss(batch, 0, pos[0], 1, cfg, &ones).item() - plain) < 1e-12);
        CHECK(plain <= 0.0);
    }

    LevelMask empty{1, std::vector<double>(2, 0.0), MaskKind::hard};
    CHECK_THROWS_AS(pair_loss(b, 0, 1, 1, with_tau(0.3), &empty), EmptyMask);
    CHECK_THROWS_AS(pair_loss(b, 0, 2, 1, with_tau(0.3)), std::invalid_argument);
}

TEST_CASE("pair_loss matches the direct scalar evaluation") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng, 4, 8, 2);
        Graph g;
        auto batch = test::make_batch(g, c);
        auto ob = test::to_oracle(c);
        for (std::size_t i = 0; i < batch.entries(); ++i) {
            for (std::size_t h = 1; h <= c.depth; ++h) {
                for (auto p : positive_set(batch, i, h)) {
                    CHECK(std::abs(pair_loss(batch, i, p, h, with_tau(c.tau)).item() -
                                   oracle::pair(ob.z, i, p, c.tau)) < 1e-10);
                    const auto& m = c.masks[i % c.n][h - 1];
                    if (m.empty()) continue;
                    std::vector<oracle::Vec> zm;
                    for (const auto& z : ob.z) zm.push_back(oracle::masked(z, m.weights));
                    CHECK(std::abs(pair_loss(batch, i, p, h, with_tau(c.tau), &m).item() -
                                   oracle::pair(zm, i, p, c.tau)) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("supcon closed forms") {
    Graph g;
    auto b = plain_batch(g, 3, 2, {1, 0, 1, 0, 0, 1}, {HierLabels{{0}}, HierLabels{{0}}, HierLabels{{1}}});
    CHECK(supcon_loss(b, with_tau(1.0)).item() == doctest::Approx(2.0 * std::log(1.0 + std::exp(-1.0))));
    CHECK(supcon_loss(b, with_tau(1.0)).item() == doctest::Approx(0.6265).epsilon(1e-4));

    for (std::size_t n : {2, 3, 5, 8}) {
        Graph h;
        std::vector<double> v;
        for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), {0.6, 0.8});
        auto batch = plain_batch(h, n, 2, v, std::vector<HierLabels>(n, HierLabels{{4}}));
        CHECK(supcon_loss(batch, with_tau(1.0)).item() ==
              doctest::Approx(static_cast<double>(n) * std::log(static_cast<double>(n - 1))));
    }

    Graph d;
    auto degenerate = plain_batch(d, 2, 2, {1, 0, 0, 1}, {HierLabels{{0}}, HierLabels{{1}}});
    CHECK_THROWS_AS(supcon_loss(degenerate, with_tau(1.0)), DegenerateBatch);
}

TEST_CASE("every loss matches its brute-force oracle") {
    std::mt19937_64 rng(2718);
    for (int trial = 0; trial < 40; ++trial) {
        auto c = test::random_case(rng);
        Graph g;
        auto batch = test::make_batch(g, c);
        auto ob = test::to_oracle(c);
        const LossConfig cfg = with_tau(c.tau);
        auto lin = oracle::linear_lambda(c.depth);
        std::vector<double> expo;
        for (std::size_t h = 1; h <= c.depth; ++h) expo.push_back(std::pow(2.0, double(c.depth - h)) / std::pow(2.0, double(c.depth - 1)));
        LossConfig exp_cfg = cfg;
        exp_cfg.lambda_mode = LambdaMode::exponential;

        CHECK(test::rel_diff(supcon_loss(batch, cfg, c.depth).item(), oracle::supcon(ob, c.depth, c.tau)) < 1e-10);
        CHECK(test::rel_diff(hmc_loss(batch, cfg).item(), oracle::hmc(ob, lin, c.tau)) < 1e-10);
        CHECK(test::rel_diff(hmc_loss(batch, exp_cfg).item(), oracle::hmc(ob, expo, c.tau)) < 1e-10);
        CHECK(test::rel_diff(hmce_loss(batch, cfg).item(), oracle::hmce(ob, lin, c.tau)) < 1e-10);
        CHECK(test::rel_diff(hmce_loss(batch, exp_cfg).item(), oracle::hmce(ob, expo, c.tau)) < 1e-10);
        CHECK(test::rel_diff(ghmlc_loss(batch, cfg, c.masks).item(),
                             oracle::ghmlc(ob, test::oracle_masks(c), c.tau)) < 1e-10);
        std::vector<BoundHead> heads;
        for (const auto& h : c.heads) heads.push_back(bind(g, h, false));
        CHECK(test::rel_diff(ahmlc_loss(batch, cfg, heads).item(),
                             oracle::ahmlc(ob, test::oracle_heads(c), c.tau)) < 1e-10);
    }
}

TEST_CASE("single-level and identity reductions") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng, 6, 8, 1);
        Graph g;
        auto batch = test::make_batch(g, c);
        const LossConfig cfg = with_tau(c.tau);
        const double base = lambda_weight(1, 1, LambdaMode::linear) * supcon_loss(batch, cfg).item();
        CHECK(std::abs(hmc_loss(batch, cfg).item() - base) < 1e-12);
        CHECK(std::abs(hmce_loss(batch, cfg).item() - base) < 1e-12);
        std::vector<std::vector<LevelMask>> ones(c.n, {LevelMask::all_ones(1, c.d)});
        CHECK(std::abs(ghmlc_loss(batch, cfg, ones).item() - base) < 1e-12);
        auto zero = init_heads(c.d, 1, HeadInit::zeros, 0);
        std::vector<BoundHead> heads{bind(g, zero[0], false)};
        CHECK(std::abs(ahmlc_loss(batch, cfg, heads).item() - base) < 1e-12);
    }
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng);
        Graph g;
        auto batch = test::make_batch(g, c);
        const LossConfig cfg = with_tau(c.tau);
        const double base = hmce_loss(batch, cfg).item();
        std::vector<std::vector<LevelMask>> ones(c.n);
        for (auto& set : ones)
            for (std::size_t h = 1; h <= c.depth; ++h) set.push_back(LevelMask::all_ones(int(h), c.d));
        CHECK(std::abs(ghmlc_loss(batch, cfg, ones).item() - base) < 1e-12);
        std::vector<BoundHead> heads;
        for (const auto& h : init_heads(c.d, c.depth, HeadInit::zeros, 0)) heads.push_back(bind(g, h, false));
        CHECK(std::abs(ahmlc_loss(batch, cfg, heads).item() - base) < 1e-12);
    }
}

TEST_CASE("hmc is linear in the level weights") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto c = test::random_case(rng);
        Graph g;
        auto batch = test::make_batch(g, c);
        LossConfig cfg = with_tau(c.tau);
        std::vector<double> lam(c.depth);
        for (std::size_t h = 1; h <= c.depth; ++h) lam[h - 1] = lambda_weight(h, c.depth, LambdaMode::linear);
        cfg.lambdas = lam;
        const double base = hmc_loss(batch, cfg).item();
        CHECK(std::abs(base - hmc_loss(batch, with_tau(c.tau)).item()) < 1e-12);
        for (auto& l : cfg.lambdas) l *= 3.5;
        CHECK(hmc_loss(batch, cfg).item() == doctest::Approx(3.5 * base).epsilon(1e-12));
    }
}

TEST_CASE("hmce max enforcement semantics") {
    Graph g;
    auto terms = g.constant(Tensor::vector({-0.5, -0.1}));
    auto coarse = g.constant(Tensor::scalar(-0.3));
    auto lifted = maximum_scalar(terms, coarse);
    CHECK(lifted.value()[0] == -0.3);
    CHECK(lifted.value()[1] == -0.1);
}

TEST_CASE("masked level loss with features split by level") {
    // d = 4, level 1 sees features {0,1}, level 2 sees {2,3}; embeddings only
    // differ in features {2,3}, so every level-1 similarity is equal.
    Graph g;
    const double s = 0.5;
    std::vector<double> v = {s, s, s, s, s, s, -s, s, s, s, s, -s, s, s, -s, -s};
    auto b = plain_batch(g, 4, 4, v,
                         {HierLabels{{0, 0}}, HierLabels{{0, 1}}, HierLabels{{1, 2}}, HierLabels{{1, 3}}});
    LevelMask m1{1, {1, 1, 0, 0}, MaskKind::hard};
    LevelMask m2{2, {0, 0, 1, 1}, MaskKind::hard};
    for (std::size_t i = 0; i < 4; ++i) {
        for (auto p : positive_set(b, i, 1)) {
            CHECK(pair_loss(b, i, p, 1, with_tau(0.2), &m1).item() ==
                  doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
        }
    }
    // the level-2 mask sees the differences
    std::vector<std::vector<LevelMask>> masks(4, {m1, m2});
    const double direct = ghmlc_loss(b, with_tau(0.2), masks).item();
    oracle::Batch ob;
    ob.samples = 4;
    for (std::size_t i = 0; i < 4; ++i) {
        ob.z.push_back(oracle::Vec(v.begin() + 4 * i, v.begin() + 4 * i + 4));
        ob.label.push_back(b.labels[i].levels);
    }
    std::vector<std::vector<oracle::Vec>> om(4, {m1.weights, m2.weights});
    CHECK(direct == doctest::Approx(oracle::ghmlc(ob, om, 0.2)).epsilon(1e-12));
}

TEST_CASE("empty hard masks fall back to all features") {
    std::mt19937_64 rng(8);
    auto c = test::random_case(rng, 4, 6, 2);
    c.with_views = true;
    c.depth = 2;
    for (auto& l : c.labels) l = HierLabels{{l.at(1) % 2, l.at(c.labels[0].depth())}};
    for (auto& set : c.masks) {
        set = {LevelMask::all_ones(1, c.d), LevelMask{2, std::vector<double>(c.d, 0.0), MaskKind::hard}};
    }
    Graph g;
    auto batch = test::make_batch(g, c);
    LossDiagnostics diag;
    const double masked = ghmlc_loss(batch, with_tau(c.tau), c.masks, &diag).item();
    CHECK(diag.empty_mask_fallbacks == c.n);
    CHECK(std::abs(masked - hmce_loss(batch, with_tau(c.tau)).item()) < 1e-12);
}

TEST_CASE("losses are permutation equivariant") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng);
        std::vector<std::size_t> perm(c.n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto p = c;
        for (std::size_t i = 0; i < c.n; ++i) {
            for (std::size_t j = 0; j < c.d; ++j) {
                p.anchors.at(i, j) = c.anchors.at(perm[i], j);
                p.views.at(i, j) = c.views.at(perm[i], j);
            }
            p.labels[i] = c.labels[perm[i]];
            p.masks[i] = c.masks[perm[i]];
        }
        Graph g;
        auto a = test::make_batch(g, c);
        auto b = test::make_batch(g, p);
        const LossConfig cfg = with_tau(c.tau);
        CHECK(std::abs(supcon_loss(a, cfg).item() - supcon_loss(b, cfg).item()) < 1e-12);
        CHECK(std::abs(hmc_loss(a, cfg).item() - hmc_loss(b, cfg).item()) < 1e-12);
        CHECK(std::abs(hmce_loss(a, cfg).item() - hmce_loss(b, cfg).item()) < 1e-12);
        CHECK(std::abs(ghmlc_loss(a, cfg, c.masks).item() - ghmlc_loss(b, cfg, p.masks).item()) < 1e-12);
        std::vector<BoundHead> heads;
        for (const auto& h : c.heads) heads.push_back(bind(g, h, false));
        CHECK(std::abs(ahmlc_loss(a, cfg, heads).item() - ahmlc_loss(b, cfg, heads).item()) < 1e-12);
    }
}

TEST_CASE("supcon is nonnegative when every anchor has positives and negatives") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        auto c = test::random_case(rng, 6, 8, 1);
        c.with_views = true;
        c.labels[0] = HierLabels{{0}};
        c.labels[1] = HierLabels{{1}};
        Graph g;
        auto batch = test::make_batch(g, c);
        CHECK(supcon_loss(batch, with_tau(c.tau)).item() >= 0.0);
    }
}

TEST_CASE("loss gradients pass finite-difference checks") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng);
        const LossConfig cfg = with_tau(c.tau);
        auto run = [&](auto loss) {
            return finite_diff_check(
                [&](Graph& g, std::span<const Var> v) { return loss(g, test::make_batch(g, c, v[0], v[1])); },
                {c.anchors, c.views}, 1e-5);
        };
        CHECK(run([&](Graph&, const EmbeddingBatch& b) { return supcon_loss(b, cfg); }) < 1e-4);
        CHECK(run([&](Graph&, const EmbeddingBatch& b) { return hmc_loss(b, cfg); }) < 1e-4);
        CHECK(run([&](Graph&, const EmbeddingBatch& b) { return hmce_loss(b, cfg); }) < 1e-4);
        CHECK(run([&](Graph&, const EmbeddingBatch& b) { return ghmlc_loss(b, cfg, c.masks); }) < 1e-4);
        CHECK(run([&](Graph& g, const EmbeddingBatch& b) {
                  std::vector<BoundHead> heads;
                  for (const auto& h : c.heads) heads.push_back(bind(g, h, false));
                  return ahmlc_loss(b, cfg, heads);
              }) < 1e-4);
    }
}

TEST_CASE("loss preconditions") {
    Graph g;
    auto b = plain_batch(g, 2, 2, {1, 0, 0, 1}, {HierLabels{{0}}, HierLabels{{0}}});
    CHECK_THROWS_AS(supcon_loss(b, with_tau(0.0)), std::invalid_argument);
    auto not_unit = plain_batch(g, 2, 2, {2, 0, 0, 1}, {HierLabels{{0}}, HierLabels{{0}}});
    CHECK_THROWS_AS(supcon_loss(not_unit, with_tau(1.0)), std::invalid_argument);
    LossConfig expo = with_tau(1.0);
    expo.lambda_mode = LambdaMode::exponential;
    std::vector<std::vector<LevelMask>> ones(2, {LevelMask::all_ones(1, 2)});
    CHECK_THROWS_AS(ghmlc_loss(b, expo, ones), std::invalid_argument);
    CHECK(apply_order(HierLabels{{1, 5}}, HierarchyOrder::class_first) == HierLabels{{5, 1}});
    CHECK(apply_order(HierLabels{{1, 5}}, HierarchyOrder::category_first) == HierLabels{{1, 5}});
}
