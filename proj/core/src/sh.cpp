#include "wildgs/sh.hpp"

#include <string>

#include "wildgs/errors.hpp"

namespace wildgs {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};

void check_degree(int degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw ContractViolation("SH degree must be in [0, " + std::to_string(kMaxShDegree) + "]");
  }
}

}  // namespace

void sh_basis(int degree, const Eigen::Vector3d& dir, std::span<double> out) {
  check_degree(degree);
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kC0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  out[4] = kC2[0] * x * y;
  out[5] = kC2[1] * y * z;
  out[6] = kC2[2] * (2.0 * z * z - x * x - y * y);
  out[7] = kC2[3] * x * z;
  out[8] = kC2[4] * (x * x - y * y);
}

void sh_basis_gradient(int degree, const Eigen::Vector3d& dir, std::span<double> out) {
  check_degree(degree);
  const double x = dir.x(), y = dir.y(), z = dir.z();
  std::fill(out.begin(), out.begin() + 3 * sh_basis_count(degree), 0.0);
  if (degree < 1) return;
  out[3 * 1 + 1] = -kC1;
  out[3 * 2 + 2] = kC1;
  out[3 * 3 + 0] = -kC1;
  if (degree < 2) return;
  out[3 * 4 + 0] = kC2[0] * y;
  out[3 * 4 + 1] = kC2[0] * x;
  out[3 * 5 + 1] = kC2[1] * z;
  out[3 * 5 + 2] = kC2[1] * y;
  out[3 * 6 + 0] = -2.0 * kC2[2] * x;
  out[3 * 6 + 1] = -2.0 * kC2[2] * y;
  out[3 * 6 + 2] = 4.0 * kC2[2] * z;
  out[3 * 7 + 0] = kC2[3] * z;
  out[3 * 7 + 2] = kC2[3] * x;
  out[3 * 8 + 0] = 2.0 * kC2[4] * x;
  out[3 * 8 + 1] = -2.0 * kC2[4] * y;
}

Eigen::Vector3d eval_sh(int degree, std::span<const double> coeffs, const Eigen::Vector3d& dir) {
  check_degree(degree);
  const int k = sh_basis_count(degree);
  if (coeffs.size() != static_cast<std::size_t>(3 * k)) throw ContractViolation("SH coefficient count mismatch");
  double basis[sh_basis_count(kMaxShDegree)];
  sh_basis(degree, dir, basis);
  Eigen::Vector3d rgb(0.5, 0.5, 0.5);
  for (int b = 0; b < k; ++b)
    for (int c = 0; c < 3; ++c) rgb[c] += basis[b] * coeffs[3 * b + c];
  return rgb.cwiseMax(0.0);
}

}  // namespace wildgs
