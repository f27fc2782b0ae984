#pragma once

#include <utility>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

/// Pixel coordinates (x = column, y = row).
using Pixel = std::pair<int, int>;

/// Maximal 8-connected sets of true pixels. Components are ordered by their
/// smallest row-major pixel index; pixels within a component are listed in
/// row-major order. This is the single connectivity convention shared by the
/// segmentation and detection metrics.
std::vector<std::vector<Pixel>> label_components(const BinaryMask& mask);

} // namespace flowlens
