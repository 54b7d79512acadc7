#include "wildgs/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wildgs/errors.hpp"

namespace wildgs {

void GaussianCloud::validate() const {
  if (!means.defined()) throw ContractViolation("gaussian cloud has no means");
  const int n = means.size(0);
  auto check = [n](const ad::Tensor& t, int cols, const char* name) {
    const bool ok = t.defined() && t.size(0) == n &&
                    ((cols == 0 && t.rank() == 1) || (cols > 0 && t.rank() == 2 && t.size(1) == cols));
    if (!ok) throw ContractViolation(std::string("gaussian field ") + name + " has the wrong shape");
  };
  check(means, 3, "means");
  check(log_scales, 3, "log_scales");
  check(rotations, 4, "rotations");
  check(opacity_logits, 0, "opacity_logits");
  check(intrinsic, kIntrinsicDim, "intrinsic");
}

GaussianCloud GaussianCloud::zeros(int n, bool requires_grad) {
  GaussianCloud c;
  c.means = ad::Tensor::zeros({n, 3}, requires_grad);
  c.log_scales = ad::Tensor::zeros({n, 3}, requires_grad);
  c.rotations = ad::Tensor::zeros({n, 4}, requires_grad);
  for (int i = 0; i < n; ++i) c.rotations.mutable_values()[4 * i] = 1.0;
  c.opacity_logits = ad::Tensor::zeros({n}, requires_grad);
  c.intrinsic = ad::Tensor::zeros({n, kIntrinsicDim}, requires_grad);
  return c;
}

GaussianCloud GaussianCloud::from_points(const std::vector<Eigen::Vector3d>& points, std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  GaussianCloud c = zeros(n, true);
  auto mu = c.means.mutable_values();
  auto ls = c.log_scales.mutable_values();
  auto op = c.opacity_logits.mutable_values();
  auto fin = c.intrinsic.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) mu[3 * i + k] = points[i][k];

  // O(n^2) nearest neighbours; initial clouds are a few thousand points.
  for (int i = 0; i < n; ++i) {
    double best[3] = {1e300, 1e300, 1e300};
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (points[i] - points[j]).squaredNorm();
      if (d < best[2]) {
        best[2] = d;
        std::sort(best, best + 3);
      }
    }
    double mean_d = 0.0;
    int count = 0;
    for (double b : best)
      if (b < 1e299) {
        mean_d += std::sqrt(b);
        ++count;
      }
    mean_d = count ? std::max(mean_d / count, 1e-4) : 0.01;
    for (int k = 0; k < 3; ++k) ls[3 * i + k] = std::log(mean_d);
    op[i] = logit(0.1);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (double& v : fin) v = normal(rng);
  return c;
}

GaussianCloud GaussianCloud::clone() const {
  GaussianCloud c;
  c.means = means.clone();
  c.log_scales = log_scales.clone();
  c.rotations = rotations.clone();
  c.opacity_logits = opacity_logits.clone();
  c.intrinsic = intrinsic.clone();
  for (ad::Tensor* t : {&c.means, &c.log_scales, &c.rotations, &c.opacity_logits, &c.intrinsic})
    t->set_requires_grad(true);
  return c;
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q_raw) {
  const double norm = q_raw.norm();
  if (!(norm > 0.0)) throw ContractViolation("zero quaternion");
  const Eigen::Vector4d q = q_raw / norm;
  const double r = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - r * z), 2 * (x * z + r * y),  //
      2 * (x * y + r * z), 1 - 2 * (x * x + z * z), 2 * (y * z - r * x),   //
      2 * (x * z - r * y), 2 * (y * z + r * x), 1 - 2 * (x * x + y * y);
  return R;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& q) {
  const Eigen::Matrix3d M = rotation_from_quaternion(q) * log_scale.array().exp().matrix().asDiagonal();
  return M * M.transpose();
}

std::optional<Projection> project(const Eigen::Matrix3d& cov3d, const Camera& camera, const Eigen::Vector3d& mean,
                                  double near) {
  const Eigen::Vector3d t = camera.to_view(mean);
  if (!(t.z() > near)) return std::nullopt;
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> J;
  J << camera.fx * iz, 0.0, -camera.fx * t.x() * iz * iz,  //
      0.0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> T = J * camera.rotation;
  Projection p;
  p.cov2d = T * cov3d * T.transpose();
  p.cov2d(0, 0) += kCovarianceFloor;
  p.cov2d(1, 1) += kCovarianceFloor;
  p.center = camera.project_view(t);
  p.depth = t.z();
  return p;
}

}  // namespace wildgs
