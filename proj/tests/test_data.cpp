#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hclr/data.hpp"
#include "hclr/errors.hpp"

using namespace hclr;

TEST_CASE("generate_blobs counts and hierarchy") {
    HierBlobConfig cfg;
    cfg.coarse_count = 4;
    cfg.fine_per_coarse = 3;
    cfg.samples_per_fine = 200;
    Dataset d = generate_blobs(cfg);
    CHECK(d.size() == 2400);
    CHECK(d.class_count(1) == 4);
    CHECK(d.class_count(2) == 12);
    CHECK(hierarchy_consistent(d));
    std::map<int, std::set<int>> parents;
    for (const auto& s : d.samples) parents[s.labels.at(2)].insert(s.labels.at(1));
    for (const auto& [fine, p] : parents) CHECK(p.size() == 1);
}

TEST_CASE("generate_blobs determinism and degenerate noise") {
    HierBlobConfig cfg;
    cfg.samples_per_fine = 5;
    CHECK(generate_blobs(cfg).samples == generate_blobs(cfg).samples);

    cfg.noise_sigma = 0.0;
    Dataset d = generate_blobs(cfg);
    for (std::size_t i = 0; i < d.size(); i += cfg.samples_per_fine) {
        for (int k = 1; k < cfg.samples_per_fine; ++k) CHECK(d.samples[i + k].features == d.samples[i].features);
    }
}

TEST_CASE("generate_blobs separation geometry") {
    HierBlobConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.samples_per_fine = 1;
    Dataset d = generate_blobs(cfg);
    auto dist = [](const Tensor& a, const Tensor& b) {
        double ss = 0;
        for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(ss);
    };
    // Fine centers sit fine_separation from their parent; parents are
    // coarse_separation apart, so sibling centers are within 2 * fine_sep.
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = i + 1; j < d.size(); ++j) {
            if (d.samples[i].labels.at(1) == d.samples[j].labels.at(1)) {
                CHECK(dist(d.samples[i].features, d.samples[j].features) <= 2 * cfg.fine_separation + 1e-9);
            } else {
                CHECK(dist(d.samples[i].features, d.samples[j].features) >=
                      cfg.coarse_separation - 2 * cfg.fine_separation - 1e-9);
            }
        }
    }
}

TEST_CASE("generate_blobs rejects bad nesting") {
    HierBlobConfig cfg;
    cfg.fine_separation = cfg.coarse_separation;
    CHECK_THROWS_AS(generate_blobs(cfg), ConfigError);
    cfg = {};
    cfg.samples_per_fine = 0;
    CHECK_THROWS_AS(generate_blobs(cfg), ConfigError);
}

TEST_CASE("nearest-centroid coarse accuracy on well separated blobs") {
    HierBlobConfig cfg;
    cfg.coarse_separation = 12.0;
    cfg.fine_separation = 2.0;
    cfg.noise_sigma = 1.0;
    cfg.samples_per_fine = 50;
    Dataset d = generate_blobs(cfg);
    const std::size_t dim = d.feature_size();
    std::map<int, std::vector<double>> centroid;
    std::map<int, int> count;
    for (const auto& s : d.samples) {
        auto& c = centroid[s.labels.at(1)];
        c.resize(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) c[j] += s.features[j];
        ++count[s.labels.at(1)];
    }
    for (auto& [k, c] : centroid)
        for (auto& v : c) v /= count[k];
    int correct = 0;
    for (const auto& s : d.samples) {
        int best = -1;
        double best_d = 1e300;
        for (const auto& [k, c] : centroid) {
            double ss = 0;
            for (std::size_t j = 0; j < dim; ++j) ss += (s.features[j] - c[j]) * (s.features[j] - c[j]);
            if (ss < best_d) best_d = ss, best = k;
        }
        correct += best == s.labels.at(1);
    }
    CHECK(correct == static_cast<int>(d.size()));
}

TEST_CASE("compose_hier_image") {
    ProceduralGlyphs glyphs(3);
    CompositeDigitConfig cfg;
    cfg.subsidiary_count = 4;
    Sample s = compose_hier_image(7, 3, glyphs, cfg, 99);
    CHECK(s.labels == HierLabels{{3, 7}});
    CHECK(s.features.rows() == 192);
    CHECK(s.features.cols() == 192);
    for (double v : s.features.values()) CHECK((v >= 0.0 && v <= 1.0));

    // The center region holds the upscaled class glyph; the border holds
    // only category glyphs.
    Tensor seven = glyphs.glyph(7, 0);
    double center_ink = 0.0, border_ink = 0.0;
    for (std::size_t r = 0; r < 192; ++r)
        for (std::size_t c = 0; c < 192; ++c) {
            const bool inside = r >= 32 && r < 160 && c >= 32 && c < 160;
            (inside ? center_ink : border_ink) += s.features.at(r, c);
        }
    CHECK(center_ink > 0.0);
    CHECK(border_ink > 0.0);

    CHECK(compose_hier_image(7, 3, glyphs, cfg, 99).features == s.features);

    cfg.subsidiary_count = 0;
    Sample bare = compose_hier_image(7, 3, glyphs, cfg, 99);
    double ring = 0.0;
    for (std::size_t r = 0; r < 192; ++r)
        for (std::size_t c = 0; c < 192; ++c)
            if (!(r >= 32 && r < 160 && c >= 32 && c < 160)) ring += bare.features.at(r, c);
    CHECK(ring == 0.0);
}

TEST_CASE("compose_hier_image placement failure and config errors") {
    ProceduralGlyphs glyphs(1, 8);
    CompositeDigitConfig cfg{32, 8, 40, 1};  // far more glyphs than border slots
    CHECK_THROWS_AS(compose_hier_image(1, 2, glyphs, cfg, 5), PlacementError);
    CompositeDigitConfig small{10, 8, 0, 1};
    CHECK_THROWS_AS(compose_hier_image(1, 2, glyphs, small, 5), ConfigError);
}

TEST_CASE("composite dataset respects the class-to-category tree") {
    ProceduralGlyphs glyphs(2, 8);
    CompositeDatasetConfig cfg;
    cfg.image = {32, 8, 2, 4};
    cfg.category_count = 3;
    cfg.samples_per_class = 2;
    Dataset d = generate_composite_digits(cfg, glyphs);
    CHECK(d.size() == 20);
    CHECK(hierarchy_consistent(d));
    CHECK(d.class_count(1) == 3);
}

TEST_CASE("augment contracts") {
    HierBlobConfig cfg;
    cfg.samples_per_fine = 1;
    Dataset d = generate_blobs(cfg);
    const Sample& s = d.samples[3];
    CHECK(augment(s, 0.0, 17) == s);
    Sample a = augment(s, 0.8, 17);
    CHECK(a.labels == s.labels);
    CHECK(a.id == s.id);
    CHECK(a.features != s.features);
    CHECK(augment(s, 0.8, 17) == a);
    CHECK_THROWS_AS(augment(s, 1.5, 1), std::invalid_argument);

    ProceduralGlyphs glyphs(3, 8);
    Sample img = compose_hier_image(4, 1, glyphs, {32, 8, 2, 3}, 5);
    CHECK(augment(img, 0.0, 9) == img);
    Sample b = augment(img, 1.0, 9);
    CHECK(b.labels == img.labels);
    CHECK(b.features.shape() == img.features.shape());
    for (double v : b.features.values()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(augment(img, 1.0, 9) == b);
}

TEST_CASE("batch sizes follow the drop rule") {
    auto sizes = [](std::size_t n, std::size_t b) {
        std::vector<std::size_t> out;
        for (const auto& g : epoch_batches(n, b, 1, 0)) out.push_back(g.size());
        return out;
    };
    CHECK(sizes(10, 4) == std::vector<std::size_t>{4, 4, 2});
    CHECK(sizes(5, 4) == std::vector<std::size_t>{4});
    CHECK(epoch_batches(30, 7, 42, 3) == epoch_batches(30, 7, 42, 3));
    CHECK(epoch_batches(30, 7, 42, 3) != epoch_batches(30, 7, 42, 4));
    CHECK_THROWS_AS(epoch_batches(0, 4, 1, 0), EmptyDataset);
    CHECK_THROWS_AS(epoch_batches(10, 1, 1, 0), std::invalid_argument);

    // each epoch is a permutation
    std::set<std::size_t> seen;
    for (const auto& g : epoch_batches(12, 4, 8, 1)) seen.insert(g.begin(), g.end());
    CHECK(seen.size() == 12);
}

TEST_CASE("BatchIterator pairs anchors with augmented views") {
    HierBlobConfig cfg;
    cfg.coarse_count = 2;
    cfg.fine_per_coarse = 2;
    cfg.samples_per_fine = 3;
    Dataset d = generate_blobs(cfg);
    BatchIterator it(d, 5, 3, 0, 0.5);
    std::size_t total = 0;
    while (auto b = it.next()) {
        REQUIRE(b->anchors.size() == b->views.size());
        for (std::size_t i = 0; i < b->anchors.size(); ++i) {
            CHECK(b->anchors[i].id == b->views[i].id);
            CHECK(b->anchors[i].labels == b->views[i].labels);
        }
        total += b->anchors.size();
    }
    CHECK(total == 12);

    BatchIterator e0(d, 5, 3, 0, 0.5), e1(d, 5, 3, 1, 0.5);
    auto b0 = e0.next(), b1 = e1.next();
    CHECK(b0->views[0].features != b1->views[0].features);
}

TEST_CASE("dataset CSV export") {
    HierBlobConfig cfg;
    cfg.coarse_count = 1;
    cfg.fine_per_coarse = 2;
    cfg.input_dim = 2;
    cfg.samples_per_fine = 1;
    std::ostringstream out;
    write_dataset_csv(generate_blobs(cfg), out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# depth=2,samples=2,features=2,classes1=1,classes2=2");
    std::getline(in, line);
    CHECK(line.rfind("0,0,0,", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("1,0,1,", 0) == 0);
}
