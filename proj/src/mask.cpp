#include "hclr/mask.hpp"

#include <algorithm>

namespace hclr {

LevelMask LevelMask::all_ones(int level, std::size_t d) {
    return LevelMask{level, std::vector<double>(d, 1.0), MaskKind::hard};
}

bool LevelMask::empty() const { return kind == MaskKind::hard && selected() == 0; }

std::size_t LevelMask::selected() const {
    return static_cast<std::size_t>(
        std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
}

}  // namespace hclr
