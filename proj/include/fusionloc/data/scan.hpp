#pragma once

#include <random>
#include <span>
#include <vector>

#include "fusionloc/core/pose.hpp"
#include "fusionloc/data/image.hpp"

namespace fusionloc::data {

/// Fixed-size scan as n_fixed x 2 row-major values.
///
/// At least n_fixed points: eval mode keeps every (len / n_fixed)-th point
/// (index floor(i * len / n_fixed)), train mode keeps a uniform random subset,
/// both in scan order. Fewer points: all originals first, then padding drawn
/// with replacement (cyclic in eval mode, uniform in train mode).
std::vector<double> sample_scan(std::span<const core::Vec2> scan, std::size_t n_fixed, Mode mode,
                                Rng& rng);

}  // namespace fusionloc::data
