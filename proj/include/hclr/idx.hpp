#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hclr/tensor.hpp"

namespace hclr {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Images from an IDX3 unsigned-byte file, pixels rescaled to [0,1].
std::vector<Tensor> load_idx_images(const std::filesystem::path& path);
/// Labels from an IDX1 unsigned-byte file; every value must be a digit.
std::vector<int> load_idx_labels(const std::filesystem::path& path);

/// Writers for the same encoding. Image pixels are quantized as round(255 * v).
void write_idx_images(const std::filesystem::path& path, const std::vector<Tensor>& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

}  // namespace hclr
