#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hclr/data.hpp"
#include "hclr/train.hpp"

namespace hclr {

struct DatasetSection {
    std::string kind = "blobs";  // blobs | composite_digits
    HierBlobConfig blobs;
    CompositeDatasetConfig composite;
    std::uint64_t glyph_seed = 5;
    std::string idx_images;  // optional digit source for composite_digits
    std::string idx_labels;
};

struct EvaluationSection {
    std::vector<std::size_t> probe_levels;  // empty: every level
    bool export_embeddings = false;
    bool export_projection = false;
};

struct ExperimentConfig {
    DatasetSection dataset;
    EncoderSpec encoder;  // input_dim comes from the dataset
    TrainConfig training;
    std::vector<LossKind> losses;
    EvaluationSection evaluation;
    std::vector<std::uint64_t> seeds{1};
    std::string text;  // raw file content, hashed into the manifest
};

/// Sectioned key = value text. Throws ConfigError naming the offending key,
/// or the path when a referenced file is missing.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

Dataset build_dataset(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace hclr
