#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "hclr/tensor.hpp"

namespace hclr {

/// Label ids per hierarchy level; index 0 holds level 1 (coarsest).
struct HierLabels {
    std::vector<int> levels;

    std::size_t depth() const { return levels.size(); }
    /// 1-based level access.
    int at(std::size_t level) const { return levels.at(level - 1); }

    friend bool operator==(const HierLabels&, const HierLabels&) = default;
};

struct Sample {
    Tensor features;  // flat vector for blobs, rows x cols image otherwise
    HierLabels labels;
    std::int64_t id = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t depth = 2;

    std::size_t size() const { return samples.size(); }
    std::size_t feature_size() const { return samples.empty() ? 0 : samples[0].features.size(); }
    /// Distinct label count at a 1-based level.
    std::size_t class_count(std::size_t level) const;
    std::vector<int> labels_at(std::size_t level) const;
};

/// True when every level-h label maps to a single level-(h-1) label.
bool hierarchy_consistent(const Dataset& data);

// ----- hierarchical blobs -----

struct HierBlobConfig {
    int coarse_count = 4;
    int fine_per_coarse = 3;
    int input_dim = 32;
    double coarse_separation = 8.0;
    double fine_separation = 3.0;
    double noise_sigma = 1.0;
    int samples_per_fine = 200;
    std::uint64_t seed = 7;
};

/// Two-level Gaussian blobs. Labels are (coarse, fine) with fine ids global
/// across parents: fine = coarse * fine_per_coarse + k.
Dataset generate_blobs(const HierBlobConfig& cfg);

// ----- composite digit images -----

class GlyphSource {
   public:
    virtual ~GlyphSource() = default;
    /// glyph_size x glyph_size image in [0,1] for a digit; variant picks among
    /// available renderings.
    virtual Tensor glyph(int digit, std::uint64_t variant) const = 0;
    virtual std::size_t glyph_size() const = 0;
};

/// Seeded blocky seven-segment digits, usable without any external files.
class ProceduralGlyphs final : public GlyphSource {
   public:
    explicit ProceduralGlyphs(std::uint64_t seed, std::size_t size = 32) : seed_(seed), size_(size) {}
    Tensor glyph(int digit, std::uint64_t variant) const override;
    std::size_t glyph_size() const override { return size_; }

   private:
    std::uint64_t seed_;
    std::size_t size_;
};

/// Glyphs taken from IDX digit images, centered (or rescaled) into the glyph box.
class ImageGlyphs final : public GlyphSource {
   public:
    ImageGlyphs(std::vector<Tensor> images, std::vector<int> labels, std::size_t size = 32);
    Tensor glyph(int digit, std::uint64_t variant) const override;
    std::size_t glyph_size() const override { return size_; }

   private:
    std::vector<std::vector<Tensor>> by_digit_;
    std::size_t size_;
};

struct CompositeDigitConfig {
    int canvas_size = 192;
    int glyph_size = 32;
    int subsidiary_count = 3;
    std::uint64_t seed = 11;
};

/// One large central class digit surrounded by small category digits placed
/// in the free border. Labels are (category, central_class).
Sample compose_hier_image(int central_class, int category, const GlyphSource& glyphs,
                          const CompositeDigitConfig& cfg, std::uint64_t seed);

struct CompositeDatasetConfig {
    CompositeDigitConfig image;
    int category_count = 2;       // class c belongs to category c % category_count
    int samples_per_class = 20;
};

Dataset generate_composite_digits(const CompositeDatasetConfig& cfg, const GlyphSource& glyphs);

// ----- augmentation and batching -----

struct AugmentParams {
    double vector_noise = 0.5;   // additive Gaussian std at strength 1
    double dropout = 0.1;        // coordinate drop probability at strength 1
    double pixel_noise = 0.05;
};

/// Random view of a sample; strength 0 is the identity. Labels are untouched.
Sample augment(const Sample& s, double strength, std::uint64_t seed,
               const AugmentParams& params = {});

struct Batch {
    std::vector<Sample> anchors;
    std::vector<Sample> views;
};

/// Index groups of one epoch: a seeded permutation chunked by batch_size,
/// dropping a trailing group smaller than 2.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t sample_count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, int epoch);

/// Yields (anchor, augmented view) batches for one epoch.
class BatchIterator {
   public:
    BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                  int epoch = 0, double augment_strength = 0.5, AugmentParams params = {});

    std::optional<Batch> next();
    const std::vector<std::vector<std::size_t>>& plan() const { return plan_; }

   private:
    const Dataset* data_;
    std::vector<std::vector<std::size_t>> plan_;
    std::size_t cursor_ = 0;
    std::uint64_t aug_seed_;
    double strength_;
    AugmentParams params_;
};

/// One metadata line then `id,level1,level2,feature...` rows.
void write_dataset_csv(const Dataset& data, std::ostream& out);

}  // namespace hclr
