#pragma once

#include <span>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

/// Merges two raters' click lists for one subject. Same-label pairs from
/// different raters closer than radius (strictly) merge into their average
/// position; pairs are taken greedily in ascending-distance order and each
/// point merges at most once. Unmatched points pass through unchanged.
/// Output order: rater a's points (merged ones at a's position in the list),
/// then rater b's unmatched points. Merged points carry rater "a+b" when the
/// raters are named, else the non-empty one.
std::vector<PointAnnotation> merge_raters(std::span<const PointAnnotation> a,
                                          std::span<const PointAnnotation> b,
                                          double radius = 5.0);

} // namespace flowlens
