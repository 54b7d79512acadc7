#pragma once

#include <Eigen/Core>
#include <vector>

#include "wildgs/camera.hpp"
#include "wildgs/gaussian.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs {

/// A Gaussian contributes to a pixel only where d^T Sigma'^-1 d <= this
/// and its alpha there is at least kMinAlpha. Both compositing paths share
/// the rule.
inline constexpr double kPowerCutoff = 60.0;
/// Pairs whose alpha falls below this are skipped (by every path).
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kMinDeterminant = 1e-12;

struct RasterSettings {
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  /// Tile-binned path. The per-pixel full-list path is the reference; both
  /// produce bitwise-identical images.
  bool tiled = true;
  int tile_size = 8;
  double near = kDefaultNear;
};

/// Images are 1 x C x H x W tensors.
struct RenderOutput {
  ad::Tensor color;         // 1 x 3 x H x W
  ad::Tensor depth;         // 1 x 1 x H x W, sum_i d_i w_i
  ad::Tensor accumulation;  // 1 x 1 x H x W, sum_i w_i
};

/// Screen-space positional gradient statistics collected during backward,
/// used by densification. Magnitudes are in NDC units.
struct ScreenGradStats {
  std::vector<double> grad_norm_sum;
  std::vector<int> visible_count;
  void reset(std::size_t n) {
    grad_norm_sum.assign(n, 0.0);
    visible_count.assign(n, 0);
  }
};

/// Differentiable splatting of `cloud` with per-Gaussian SH coefficients
/// `sh` (n x 3*(degree+1)^2). Gaussians are culled at the near plane,
/// sorted front to back by view depth (ties: ascending index) and alpha
/// composited with early termination once transmittance drops below
/// kTransmittanceCutoff. Colour is finalized as C + T_final * background.
/// Gradients flow to means, log_scales, rotations, opacity_logits and sh.
/// `stats`, when given, must outlive the tape's backward pass.
RenderOutput rasterize(ad::Tape& tape, const GaussianCloud& cloud, const ad::Tensor& sh, int sh_degree,
                       const Camera& camera, const RasterSettings& settings = {},
                       ScreenGradStats* stats = nullptr);

}  // namespace wildgs
