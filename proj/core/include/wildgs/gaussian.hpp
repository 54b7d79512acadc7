#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "wildgs/camera.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs {

inline constexpr int kIntrinsicDim = 32;
inline constexpr double kCovarianceFloor = 0.3;  // px^2 added to the 2D covariance diagonal
inline constexpr double kDefaultNear = 0.01;

/// Structure-of-arrays Gaussian scene. Quaternions are (w, x, y, z) and are
/// normalized at use; scales are stored as logs; opacity as a logit.
struct GaussianCloud {
  ad::Tensor means;           // n x 3
  ad::Tensor log_scales;      // n x 3
  ad::Tensor rotations;       // n x 4
  ad::Tensor opacity_logits;  // n
  ad::Tensor intrinsic;       // n x kIntrinsicDim

  std::size_t size() const { return means.defined() ? static_cast<std::size_t>(means.size(0)) : 0; }

  /// Throws ContractViolation if the per-field arrays disagree on n.
  void validate() const;

  static GaussianCloud zeros(int n, bool requires_grad = false);

  /// Isotropic Gaussians at `points`, scale from the mean distance to the
  /// three nearest neighbours, identity rotation, opacity 0.1 and small
  /// random intrinsic features.
  static GaussianCloud from_points(const std::vector<Eigen::Vector3d>& points, std::uint64_t seed);

  std::vector<ad::Tensor> tensors() const { return {means, log_scales, rotations, opacity_logits, intrinsic}; }
  GaussianCloud clone() const;
};

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q);

/// Sigma = R diag(exp(s))^2 R^T. Throws ContractViolation for a zero quaternion.
Eigen::Matrix3d covariance_from(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& q);

struct Projection {
  Eigen::Matrix2d cov2d;  // includes the kCovarianceFloor diagonal
  Eigen::Vector2d center;
  double depth = 0.0;
};

/// EWA projection of a world-space Gaussian. Returns nullopt (culled) when
/// the centre is not beyond the near plane.
std::optional<Projection> project(const Eigen::Matrix3d& cov3d, const Camera& camera, const Eigen::Vector3d& mean,
                                  double near = kDefaultNear);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace wildgs
