#pragma once

#include <cstdint>
#include <vector>

#include "wildgs/gaussian.hpp"
#include "wildgs/rasterizer.hpp"

namespace wildgs {

struct DensifyOptions {
  double grad_threshold = 2e-4;  // mean NDC positional gradient
  double min_opacity = 0.01;
  double percent_dense = 0.01;  // clone/split boundary as a fraction of scene_extent
  double scene_extent = 1.0;
  double split_scale_divisor = 1.6;
  std::size_t max_gaussians = 0;  // 0: unbounded
  std::uint64_t seed = 0;
};

struct DensifyResult {
  GaussianCloud cloud;
  /// For each output row, the input row it came from.
  std::vector<int> source;
  /// 1 for rows created by cloning or splitting (their optimizer state starts at zero).
  std::vector<std::uint8_t> fresh;
  int cloned = 0, split = 0, pruned = 0;
};

/// Clones small high-gradient Gaussians, splits large ones into two
/// samples drawn from the parent with scale / split_scale_divisor, then
/// drops every Gaussian whose opacity is below min_opacity. Survivors keep
/// their order; new rows are appended. Children inherit intrinsic features.
DensifyResult densify_and_prune(const GaussianCloud& cloud, const ScreenGradStats& stats,
                                const DensifyOptions& options);

}  // namespace wildgs
