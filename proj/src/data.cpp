#include "hclr/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include "hclr/errors.hpp"
#include "hclr/rng.hpp"

namespace hclr {

std::size_t Dataset::class_count(std::size_t level) const {
    std::set<int> seen;
    for (const auto& s : samples) seen.insert(s.labels.at(level));
    return seen.size();
}

std::vector<int> Dataset::labels_at(std::size_t level) const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.labels.at(level));
    return out;
}

bool hierarchy_consistent(const Dataset& data) {
    for (std::size_t h = 2; h <= data.depth; ++h) {
        std::map<int, int> parent;
        for (const auto& s : data.samples) {
            auto [it, inserted] = parent.emplace(s.labels.at(h), s.labels.at(h - 1));
            if (!inserted && it->second != s.labels.at(h - 1)) return false;
        }
    }
    return true;
}

// ----- blobs -----

namespace {

std::vector<double> random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = n01(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (auto& x : v) x /= norm;
    return v;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(ss);
}

}  // namespace

Dataset generate_blobs(const HierBlobConfig& cfg) {
    if (cfg.coarse_count < 1 || cfg.fine_per_coarse < 1 || cfg.input_dim < 1 ||
        cfg.samples_per_fine < 1) {
        throw ConfigError("blob counts must all be >= 1");
    }
    if (cfg.coarse_separation < 0.0 || cfg.fine_separation < 0.0 || cfg.noise_sigma < 0.0) {
        throw ConfigError("blob separations and noise must be non-negative");
    }
    if (!(cfg.fine_separation < cfg.coarse_separation)) {
        throw ConfigError("fine_separation must be smaller than coarse_separation");
    }
    std::mt19937_64 rng(cfg.seed);

    // Coarse centers on a sphere, rejection-sampled for pairwise separation.
    // The radius grows if a low-dimensional space cannot fit them.
    std::vector<std::vector<double>> coarse;
    double radius = cfg.coarse_separation;
    int failures = 0;
    while (static_cast<int>(coarse.size()) < cfg.coarse_count) {
        auto c = random_unit(rng, cfg.input_dim);
        for (auto& x : c) x *= radius;
        const bool ok = std::all_of(coarse.begin(), coarse.end(), [&](const auto& other) {
            return distance(c, other) >= cfg.coarse_separation;
        });
        if (ok) {
            coarse.push_back(std::move(c));
            continue;
        }
        if (++failures % 1000 == 0) radius *= 1.5;
        if (failures > 100000) throw ConfigError("could not place coarse centers");
    }

    std::vector<std::vector<double>> fine;
    for (int c = 0; c < cfg.coarse_count; ++c) {
        for (int k = 0; k < cfg.fine_per_coarse; ++k) {
            auto dir = random_unit(rng, cfg.input_dim);
            std::vector<double> center(coarse[c]);
            for (int j = 0; j < cfg.input_dim; ++j) center[j] += cfg.fine_separation * dir[j];
            fine.push_back(std::move(center));
        }
    }

    Dataset data;
    data.depth = 2;
    std::normal_distribution<double> noise(0.0, 1.0);
    std::int64_t id = 0;
    for (int c = 0; c < cfg.coarse_count; ++c) {
        for (int k = 0; k < cfg.fine_per_coarse; ++k) {
            const int f = c * cfg.fine_per_coarse + k;
            for (int s = 0; s < cfg.samples_per_fine; ++s) {
                std::vector<double> x(fine[f]);
                for (auto& v : x) v += cfg.noise_sigma * noise(rng);
                data.samples.push_back(Sample{Tensor::vector(std::move(x)), HierLabels{{c, f}}, id++});
            }
        }
    }
    return data;
}

// ----- glyphs -----

namespace {

// Segment layout:  0 top, 1 upper-right, 2 lower-right, 3 bottom,
//                  4 lower-left, 5 upper-left, 6 middle.
constexpr unsigned char kSegments[10] = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

void fill_rect(Tensor& img, std::size_t size, int r0, int c0, int r1, int c1, double v) {
    const int n = static_cast<int>(size);
    for (int r = std::max(0, r0); r < std::min(n, r1); ++r)
        for (int c = std::max(0, c0); c < std::min(n, c1); ++c) img.at(r, c) = v;
}

Tensor fit_into_box(const Tensor& src, std::size_t size) {
    Tensor out = Tensor::zeros({size, size});
    const std::size_t rows = src.rows(), cols = src.cols();
    if (rows <= size && cols <= size) {
        const std::size_t r0 = (size - rows) / 2, c0 = (size - cols) / 2;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out.at(r0 + r, c0 + c) = src.at(r, c);
        return out;
    }
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) out.at(r, c) = src.at(r * rows / size, c * cols / size);
    return out;
}

}  // namespace

Tensor ProceduralGlyphs::glyph(int digit, std::uint64_t variant) const {
    if (digit < 0 || digit > 9) throw std::out_of_range("digit must be in [0,9]");
    std::mt19937_64 rng(derive_seed({seed_, static_cast<std::uint64_t>(digit), variant}));
    const int n = static_cast<int>(size_);
    std::uniform_int_distribution<int> jitter(-1, 1);
    const int thick = std::max(1, n / 10 + jitter(rng));
    const int left = n / 5 + jitter(rng), right = n - n / 5 + jitter(rng);
    const int top = n / 8 + jitter(rng), bottom = n - n / 8 + jitter(rng);
    const int mid = (top + bottom) / 2 + jitter(rng);
    std::uniform_real_distribution<double> ink(0.8, 1.0);
    const double v = ink(rng);

    Tensor img = Tensor::zeros({size_, size_});
    const unsigned char seg = kSegments[digit];
    if (seg & 1) fill_rect(img, size_, top, left, top + thick, right, v);
    if (seg & 2) fill_rect(img, size_, top, right - thick, mid, right, v);
    if (seg & 4) fill_rect(img, size_, mid, right - thick, bottom, right, v);
    if (seg & 8) fill_rect(img, size_, bottom - thick, left, bottom, right, v);
    if (seg & 16) fill_rect(img, size_, mid, left, bottom, left + thick, v);
    if (seg & 32) fill_rect(img, size_, top, left, mid, left + thick, v);
    if (seg & 64) fill_rect(img, size_, mid - thick / 2, left, mid - thick / 2 + thick, right, v);
    return img;
}

ImageGlyphs::ImageGlyphs(std::vector<Tensor> images, std::vector<int> labels, std::size_t size)
    : by_digit_(10), size_(size) {
    if (images.size() != labels.size()) {
        throw std::invalid_argument("glyph images and labels differ in count");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const int d = labels[i];
        if (d < 0 || d > 9) throw std::out_of_range("glyph label must be in [0,9]");
        by_digit_[d].push_back(fit_into_box(images[i], size_));
    }
}

Tensor ImageGlyphs::glyph(int digit, std::uint64_t variant) const {
    if (digit < 0 || digit > 9) throw std::out_of_range("digit must be in [0,9]");
    const auto& pool = by_digit_[digit];
    if (pool.empty()) throw std::invalid_argument("no glyph image for digit " + std::to_string(digit));
    return pool[variant % pool.size()];
}

// ----- composite images -----

namespace {

struct Box {
    int r, c, size;
    bool overlaps(const Box& o) const {
        return r < o.r + o.size && o.r < r + size && c < o.c + o.size && o.c < c + size;
    }
};

void stamp(Tensor& canvas, const Tensor& glyph, int r0, int c0, int out_size) {
    const int g = static_cast<int>(glyph.rows());
    for (int r = 0; r < out_size; ++r) {
        for (int c = 0; c < out_size; ++c) {
            const double v = glyph.at(r * g / out_size, c * g / out_size);
            double& dst = canvas.at(r0 + r, c0 + c);
            dst = std::max(dst, v);
        }
    }
}

}  // namespace

Sample compose_hier_image(int central_class, int category, const GlyphSource& glyphs,
                          const CompositeDigitConfig& cfg, std::uint64_t seed) {
    const int canvas = cfg.canvas_size, g = cfg.glyph_size;
    if (g < 1 || canvas < 2 * g) throw ConfigError("canvas_size must be at least 2 * glyph_size");
    if (cfg.subsidiary_count < 0) throw ConfigError("subsidiary_count must be >= 0");
    if (static_cast<int>(glyphs.glyph_size()) < 1) throw ConfigError("empty glyph source");

    std::mt19937_64 rng(seed);
    Tensor img = Tensor::zeros({static_cast<std::size_t>(canvas), static_cast<std::size_t>(canvas)});

    // Central glyph fills the square left after a border one glyph wide.
    const int center = std::max(canvas - 2 * g, g);
    const int offset = (canvas - center) / 2;
    const Box central{offset, offset, center};
    stamp(img, glyphs.glyph(central_class, rng()), offset, offset, center);

    std::vector<Box> placed;
    const int border = offset;  // width of the free ring
    for (int k = 0; k < cfg.subsidiary_count; ++k) {
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            std::uniform_int_distribution<int> side_dist(0, 3);
            std::uniform_int_distribution<int> along(0, canvas - g);
            std::uniform_int_distribution<int> across(0, std::max(0, border - g));
            const int side = side_dist(rng);
            const int a = along(rng), b = across(rng);
            Box box{};
            switch (side) {
                case 0: box = {b, a, g}; break;
                case 1: box = {canvas - g - b, a, g}; break;
                case 2: box = {a, b, g}; break;
                default: box = {a, canvas - g - b, g}; break;
            }
            if (box.overlaps(central)) continue;
            if (std::any_of(placed.begin(), placed.end(), [&](const Box& o) { return box.overlaps(o); })) {
                continue;
            }
            placed.push_back(box);
            ok = true;
        }
        if (!ok) {
            throw PlacementError("could not place subsidiary glyph " + std::to_string(k) +
                                 " after 1000 attempts");
        }
        stamp(img, glyphs.glyph(category, rng()), placed.back().r, placed.back().c, g);
    }
    return Sample{std::move(img), HierLabels{{category, central_class}}, 0};
}

Dataset generate_composite_digits(const CompositeDatasetConfig& cfg, const GlyphSource& glyphs) {
    if (cfg.category_count < 1 || cfg.category_count > 10) {
        throw ConfigError("category_count must be in [1,10]");
    }
    if (cfg.samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
    Dataset data;
    data.depth = 2;
    std::int64_t id = 0;
    for (int cls = 0; cls < 10; ++cls) {
        const int category = cls % cfg.category_count;
        for (int s = 0; s < cfg.samples_per_class; ++s) {
            const auto seed = derive_seed({cfg.image.seed, static_cast<std::uint64_t>(id)});
            Sample sample = compose_hier_image(cls, category, glyphs, cfg.image, seed);
            sample.id = id++;
            data.samples.push_back(std::move(sample));
        }
    }
    return data;
}

// ----- augmentation -----

Sample augment(const Sample& s, double strength, std::uint64_t seed, const AugmentParams& params) {
    if (!(strength >= 0.0 && strength <= 1.0)) {
        throw std::invalid_argument("augmentation strength must lie in [0,1]");
    }
    if (strength == 0.0) return s;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Sample out = s;

    if (s.features.rank() < 2) {
        const double sigma = strength * params.vector_noise;
        const double drop = strength * params.dropout;
        for (auto& x : out.features.data()) {
            x += sigma * n01(rng);
            if (u01(rng) < drop) x = 0.0;
        }
        return out;
    }

    const std::size_t rows = s.features.rows(), cols = s.features.cols();
    const double area = 1.0 - 0.5 * strength * u01(rng);
    const double side = std::sqrt(area);
    const auto crop_r = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(side * rows)));
    const auto crop_c = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(side * cols)));
    std::uniform_int_distribution<std::size_t> off_r(0, rows - crop_r), off_c(0, cols - crop_c);
    const std::size_t r0 = off_r(rng), c0 = off_c(rng);
    const bool flip = u01(rng) < 0.5 * strength;
    const double sigma = strength * params.pixel_noise;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t sc = flip ? cols - 1 - c : c;
            double v = s.features.at(r0 + r * crop_r / rows, c0 + sc * crop_c / cols);
            v += sigma * n01(rng);
            out.features.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

// ----- batching -----

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t sample_count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, int epoch) {
    if (sample_count == 0) throw EmptyDataset("cannot batch an empty dataset");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    std::vector<std::size_t> order(sample_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed({shuffle_seed, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < sample_count; start += batch_size) {
        const std::size_t end = std::min(sample_count, start + batch_size);
        if (end - start < 2) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size,
                             std::uint64_t shuffle_seed, int epoch, double augment_strength,
                             AugmentParams params)
    : data_(&data),
      plan_(epoch_batches(data.size(), batch_size, shuffle_seed, epoch)),
      aug_seed_(derive_seed({shuffle_seed, static_cast<std::uint64_t>(epoch), 0xa09ULL})),
      strength_(augment_strength),
      params_(params) {}

std::optional<Batch> BatchIterator::next() {
    if (cursor_ >= plan_.size()) return std::nullopt;
    Batch b;
    for (auto idx : plan_[cursor_]) {
        const Sample& s = data_->samples[idx];
        b.anchors.push_back(s);
        b.views.push_back(
            augment(s, strength_, derive_seed({aug_seed_, static_cast<std::uint64_t>(s.id)}), params_));
    }
    ++cursor_;
    return b;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    out << "# depth=" << data.depth << ",samples=" << data.size()
        << ",features=" << data.feature_size();
    for (std::size_t h = 1; h <= data.depth; ++h) out << ",classes" << h << "=" << data.class_count(h);
    out << "\n";
    out.precision(17);
    for (const auto& s : data.samples) {
        out << s.id;
        for (int l : s.labels.levels) out << ',' << l;
        for (double v : s.features.values()) out << ',' << v;
        out << '\n';
    }
}

}  // namespace hclr
