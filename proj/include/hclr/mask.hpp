#pragma once

#include <cstddef>
#include <vector>

namespace hclr {

enum class MaskKind { hard, soft };

/// Per-level feature weights: binary for GMM masks, a positive simplex
/// vector for attention masks.
struct LevelMask {
    int level = 1;
    std::vector<double> weights;
    MaskKind kind = MaskKind::hard;

    static LevelMask all_ones(int level, std::size_t d);
    /// A hard mask selecting no feature.
    bool empty() const;
    std::size_t selected() const;

    friend bool operator==(const LevelMask&, const LevelMask&) = default;
};

}  // namespace hclr
