#pragma once

#include <Eigen/Core>
#include <span>

namespace wildgs {

inline constexpr int kMaxShDegree = 2;

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH basis values (3DGS sign/order convention) for a unit direction.
/// `out` must hold sh_basis_count(degree) values.
void sh_basis(int degree, const Eigen::Vector3d& dir, std::span<double> out);

/// d(basis_k)/d(dir) as rows of `out` (sh_basis_count(degree) x 3, row-major).
void sh_basis_gradient(int degree, const Eigen::Vector3d& dir, std::span<double> out);

/// RGB = max(0, sum_k coeffs[k*3 + c] * Y_k(dir) + 0.5). Coefficients are
/// stored basis-major, channel-minor.
Eigen::Vector3d eval_sh(int degree, std::span<const double> coeffs, const Eigen::Vector3d& dir);

}  // namespace wildgs
