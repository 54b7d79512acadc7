#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "support/render_oracle.hpp"
#include "support/testutil.hpp"
#include "wildgs/densify.hpp"
#include "wildgs/errors.hpp"
#include "wildgs/grad_check.hpp"
#include "wildgs/rasterizer.hpp"
#include "wildgs/sh.hpp"

using namespace wildgs;
using ad::Tape;
using ad::Tensor;
using testutil::front_camera;
using testutil::random_scene;

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

RenderOutput render(const testutil::RandomScene& s, const Camera& cam, RasterSettings settings = {}) {
  Tape tape(false);
  return rasterize(tape, s.cloud, s.sh, s.degree, cam, settings);
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
}

Camera random_pose_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Vector3d eye = 4.0 * random_unit(rng);
  const Eigen::Vector3d target(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
  return Camera::look_at(eye, target, Eigen::Vector3d(0, 0, 1), 40.0, 44.0, 32, 24);
}

}  // namespace

TEST_CASE("SH basis matches the closed-form real harmonics") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d d = random_unit(rng);
    // Spherical-coordinate forms.
    const double theta = std::acos(d.z()), phi = std::atan2(d.y(), d.x());
    const double pi = std::acos(-1.0);
    const double st = std::sin(theta), ct = std::cos(theta);
    const double expect[9] = {0.5 / std::sqrt(pi),
                              -std::sqrt(3 / (4 * pi)) * st * std::sin(phi),
                              std::sqrt(3 / (4 * pi)) * ct,
                              -std::sqrt(3 / (4 * pi)) * st * std::cos(phi),
                              0.25 * std::sqrt(15 / pi) * st * st * std::sin(2 * phi),
                              -0.5 * std::sqrt(15 / pi) * st * ct * std::sin(phi),
                              0.25 * std::sqrt(5 / pi) * (3 * ct * ct - 1),
                              -0.5 * std::sqrt(15 / pi) * st * ct * std::cos(phi),
                              0.25 * std::sqrt(15 / pi) * st * st * std::cos(2 * phi)};
    double got[9];
    sh_basis(2, d, got);
    for (int k = 0; k < 9; ++k) CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("SH basis is orthonormal over the sphere") {
  const int nt = 2000, np = 64;
  const double pi = std::acos(-1.0);
  Eigen::Matrix<double, 9, 9> gram = Eigen::Matrix<double, 9, 9>::Zero();
  double basis[9];
  for (int i = 0; i < nt; ++i) {
    const double z = -1.0 + (i + 0.5) * 2.0 / nt;
    const double r = std::sqrt(1 - z * z);
    for (int j = 0; j < np; ++j) {
      const double phi = (j + 0.5) * 2 * pi / np;
      sh_basis(2, Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z), basis);
      Eigen::Map<Eigen::Matrix<double, 9, 1>> b(basis);
      gram += b * b.transpose() * (2.0 / nt) * (2 * pi / np);
    }
  }
  CHECK((gram - Eigen::Matrix<double, 9, 9>::Identity()).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("SH basis gradient matches finite differences") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d d = random_unit(rng);
    double grad[27];
    sh_basis_gradient(2, d, grad);
    for (int axis = 0; axis < 3; ++axis) {
      Eigen::Vector3d up = d, down = d;
      up[axis] += 1e-6;
      down[axis] -= 1e-6;
      double bu[9], bd[9];
      sh_basis(2, up, bu);
      sh_basis(2, down, bd);
      for (int k = 0; k < 9; ++k) CHECK(grad[3 * k + axis] == doctest::Approx((bu[k] - bd[k]) / 2e-6).epsilon(1e-7));
    }
  }
}

TEST_CASE("eval_sh clamps negative channels to zero") {
  std::vector<double> c(3, 0.0);
  c[0] = -10.0;
  const Eigen::Vector3d rgb = eval_sh(0, c, Eigen::Vector3d(0, 0, 1));
  CHECK(rgb[0] == 0.0);
  CHECK(rgb[1] == 0.5);
}

TEST_CASE("covariance eigen-decomposition recovers squared scales and rotation axes") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Vector3d s(u(rng), u(rng), u(rng));
    const Eigen::Vector4d q(u(rng), u(rng), u(rng), u(rng));
    const Eigen::Matrix3d cov = covariance_from(s, q);
    CHECK((cov - cov.transpose()).norm() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    std::vector<double> expect = {std::exp(2 * s[0]), std::exp(2 * s[1]), std::exp(2 * s[2])};
    std::sort(expect.begin(), expect.end());
    for (int k = 0; k < 3; ++k) CHECK(es.eigenvalues()[k] == doctest::Approx(expect[k]).epsilon(1e-10));
    // Each rotation column is an eigenvector with eigenvalue exp(2 s_k).
    const Eigen::Quaterniond qe(q[0], q[1], q[2], q[3]);
    const Eigen::Matrix3d R = qe.normalized().toRotationMatrix();
    for (int k = 0; k < 3; ++k)
      CHECK((cov * R.col(k) - std::exp(2 * s[k]) * R.col(k)).norm() < 1e-10 * std::max(1.0, std::exp(2 * s[k])));
  }
  CHECK_THROWS_AS(covariance_from(Eigen::Vector3d::Zero(), Eigen::Vector4d::Zero()), ContractViolation);
}

TEST_CASE("on-axis isotropic Gaussian projects to (f/d)^2 sigma^2 plus the floor") {
  for (double d : {1.0, 2.5, 7.0}) {
    for (double sigma : {0.01, 0.1, 0.5}) {
      Camera cam = front_camera(64, 64, 50.0);
      const auto p = project(std::pow(sigma, 2) * Eigen::Matrix3d::Identity(), cam, Eigen::Vector3d(0, 0, d));
      REQUIRE(p.has_value());
      const double expect = std::pow(50.0 / d * sigma, 2) + kCovarianceFloor;
      CHECK(std::abs(p->cov2d(0, 0) - expect) < 1e-9);
      CHECK(std::abs(p->cov2d(1, 1) - expect) < 1e-9);
      CHECK(std::abs(p->cov2d(0, 1)) < 1e-9);
      CHECK(p->center.x() == doctest::Approx(32.0));
    }
  }
}

TEST_CASE("projected covariance matches a finite-difference projective Jacobian") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const Camera cam = random_pose_camera(rng);
    const Eigen::Vector3d mu(0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng));
    const Eigen::Matrix3d cov = covariance_from(Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.5 - Eigen::Vector3d::Constant(1.5),
                                                Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)));
    Eigen::Matrix<double, 2, 3> J;
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d a = mu, b = mu;
      a[k] += h;
      b[k] -= h;
      J.col(k) = (cam.project_view(cam.to_view(a)) - cam.project_view(cam.to_view(b))) / (2 * h);
    }
    const Eigen::Matrix2d expect = J * cov * J.transpose() + kCovarianceFloor * Eigen::Matrix2d::Identity();
    const auto p = project(cov, cam, mu);
    REQUIRE(p.has_value());
    CHECK((p->cov2d - expect).norm() / expect.norm() < 1e-3);
  }
}

TEST_CASE("projection culls centres at or behind the near plane") {
  Camera cam = front_camera(8, 8, 10.0);
  CHECK_FALSE(project(Eigen::Matrix3d::Identity(), cam, Eigen::Vector3d(0, 0, -1)).has_value());
  CHECK_FALSE(project(Eigen::Matrix3d::Identity(), cam, Eigen::Vector3d(0, 0, kDefaultNear)).has_value());
}

TEST_CASE("camera validation rejects bad intrinsics and rotations") {
  Camera cam = front_camera(8, 8, 10.0);
  CHECK_NOTHROW(cam.validate());
  Camera bad = cam;
  bad.fx = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = cam;
  bad.rotation(0, 0) = 1.001;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = cam;
  bad.rotation = -Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("tiled and reference rasterization match the naive oracle") {
  double worst = 0.0;
  for (int scene = 0; scene < 50; ++scene) {
    std::mt19937_64 rng(1000 + scene);
    const int n = 1 + scene % 10;
    const auto s = random_scene(n, scene % 3, rng, 0.05, 0.99);
    const Camera cam = front_camera(20 + scene % 7, 16 + scene % 5, 18.0);
    const Eigen::Vector3d bg(0.1, 0.2, 0.3);
    const auto oracle = testutil::oracle_render(s.cloud, values_of(s.sh), s.degree, cam, bg);
    RasterSettings tiled;
    tiled.background = bg;
    tiled.tile_size = 1 + scene % 9;
    RasterSettings ref = tiled;
    ref.tiled = false;
    const auto a = render(s, cam, tiled);
    const auto b = render(s, cam, ref);
    for (std::size_t i = 0; i < oracle.color.size(); ++i) worst = std::max(worst, std::abs(a.color[i] - oracle.color[i]));
    for (std::size_t i = 0; i < oracle.depth.size(); ++i) {
      worst = std::max(worst, std::abs(a.depth[i] - oracle.depth[i]));
      worst = std::max(worst, std::abs(a.accumulation[i] - oracle.accumulation[i]));
    }
    CHECK(values_of(a.color) == values_of(b.color));
    CHECK(values_of(a.depth) == values_of(b.depth));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("permuting the input Gaussians leaves the image bitwise unchanged") {
  std::mt19937_64 rng(7);
  const auto s = random_scene(10, 1, rng);
  const Camera cam = front_camera(24, 24, 20.0);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  testutil::RandomScene p = s;
  p.cloud = GaussianCloud::zeros(10, false);
  p.sh = Tensor::zeros(s.sh.shape());
  auto copy_rows = [&](const Tensor& src, Tensor& dst) {
    const int w = static_cast<int>(src.numel() / 10);
    for (int i = 0; i < 10; ++i)
      for (int k = 0; k < w; ++k) dst.mutable_values()[i * w + k] = src[perm[i] * w + k];
  };
  copy_rows(s.cloud.means, p.cloud.means);
  copy_rows(s.cloud.log_scales, p.cloud.log_scales);
  copy_rows(s.cloud.rotations, p.cloud.rotations);
  copy_rows(s.cloud.opacity_logits, p.cloud.opacity_logits);
  copy_rows(s.sh, p.sh);
  CHECK(values_of(render(s, cam).color) == values_of(render(p, cam).color));
}

TEST_CASE("accumulation stays in [0,1] and colour in [0,1] on a black background") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto s = random_scene(10, 1, rng, 0.5, 0.999);
    const auto out = render(s, front_camera(16, 16, 14.0));
    for (double a : out.accumulation.values()) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    for (double c : out.color.values()) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }
}

TEST_CASE("rasterizer gradients match finite differences") {
  std::mt19937_64 rng(42);
  auto s = random_scene(8, 2, rng, 0.2, 0.7);
  const Camera cam = front_camera(16, 16, 14.0);
  RasterSettings settings;
  settings.background = Eigen::Vector3d(0.2, 0.1, 0.3);
  Tensor w_color = testutil::random_tensor({1, 3, 16, 16}, rng, -1, 1, false);
  Tensor w_depth = testutil::random_tensor({1, 1, 16, 16}, rng, -0.1, 0.1, false);
  Tensor w_acc = testutil::random_tensor({1, 1, 16, 16}, rng, -1, 1, false);
  auto f = [&](Tape& t) {
    const auto out = rasterize(t, s.cloud, s.sh, s.degree, cam, settings);
    Tensor l = ad::add(t, ad::sum(t, ad::mul(t, out.color, w_color)), ad::sum(t, ad::mul(t, out.depth, w_depth)));
    return ad::add(t, l, ad::sum(t, ad::mul(t, out.accumulation, w_acc)));
  };
  const auto r = ad::grad_check(f, {s.cloud.means, s.cloud.log_scales, s.cloud.rotations, s.cloud.opacity_logits, s.sh},
                                1e-6);
  INFO("param " << r.worst_param << " index " << r.worst_index << " analytic " << r.analytic << " numeric "
                << r.numeric);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("depth of a saturated single Gaussian equals its view depth") {
  GaussianCloud c = GaussianCloud::zeros(1, false);
  const double d = 3.25;
  c.means.mutable_values()[2] = d;
  for (int k = 0; k < 3; ++k) c.log_scales.mutable_values()[k] = std::log(8.0);
  c.opacity_logits.mutable_values()[0] = 40.0;  // sigmoid rounds to 1
  Tensor sh = Tensor::zeros({1, 3});
  Tape tape(false);
  const auto out = rasterize(tape, c, sh, 0, front_camera(16, 16, 10.0));
  int saturated = 0;
  for (std::size_t i = 0; i < out.depth.numel(); ++i) {
    const double a = out.accumulation[i];
    if (a > 0) CHECK(out.depth[i] / a == doctest::Approx(d).epsilon(1e-12));
    if (a > 0.999) {
      ++saturated;
      CHECK(std::abs(out.depth[i] - d) <= (1.0 - a) * d + 1e-12);
    }
  }
  CHECK(saturated > 0);
}

TEST_CASE("Gaussians behind the camera render nothing") {
  GaussianCloud c = GaussianCloud::zeros(1, false);
  c.means.mutable_values()[2] = -2.0;
  c.opacity_logits.mutable_values()[0] = 5.0;
  Tape tape(false);
  const auto out = rasterize(tape, c, Tensor::zeros({1, 3}), 0, front_camera(8, 8, 10.0));
  for (double a : out.accumulation.values()) CHECK(a == 0.0);
}

TEST_CASE("rasterize rejects a mismatched SH block") {
  std::mt19937_64 rng(1);
  auto s = random_scene(3, 1, rng);
  Tape tape(false);
  CHECK_THROWS_AS(rasterize(tape, s.cloud, s.sh, 2, front_camera(8, 8, 8.0)), ContractViolation);
}

TEST_CASE("densify with no gradient and no faint Gaussians is the identity") {
  std::mt19937_64 rng(5);
  auto s = random_scene(6, 0, rng);
  ScreenGradStats stats;
  stats.reset(6);
  const auto r = densify_and_prune(s.cloud, stats, {});
  CHECK(values_of(r.cloud.means) == values_of(s.cloud.means));
  CHECK(values_of(r.cloud.log_scales) == values_of(s.cloud.log_scales));
  CHECK(values_of(r.cloud.intrinsic) == values_of(s.cloud.intrinsic));
  CHECK(r.source == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("densify prunes a transparent Gaussian") {
  std::mt19937_64 rng(6);
  auto s = random_scene(5, 0, rng);
  s.cloud.opacity_logits.mutable_values()[2] = -1e3;
  ScreenGradStats stats;
  stats.reset(5);
  const auto r = densify_and_prune(s.cloud, stats, {});
  CHECK(r.cloud.size() == 4);
  CHECK(r.pruned == 1);
  CHECK(r.source == std::vector<int>{0, 1, 3, 4});
}

TEST_CASE("densify clones small and splits large high-gradient Gaussians") {
  GaussianCloud c = GaussianCloud::zeros(2, true);
  c.log_scales.mutable_values()[0] = c.log_scales.mutable_values()[1] = c.log_scales.mutable_values()[2] = std::log(0.001);
  for (int k = 3; k < 6; ++k) c.log_scales.mutable_values()[k] = std::log(0.5);
  ScreenGradStats stats;
  stats.reset(2);
  stats.grad_norm_sum = {1.0, 1.0};
  stats.visible_count = {1, 1};
  const auto r = densify_and_prune(c, stats, {});
  CHECK(r.cloned == 1);
  CHECK(r.split == 1);
  CHECK(r.cloud.size() == 4);  // survivor 0, its clone, two split children
  CHECK(r.source == std::vector<int>{0, 0, 1, 1});
  CHECK(r.fresh == std::vector<std::uint8_t>{0, 1, 1, 1});
  CHECK(r.cloud.log_scales[6] == doctest::Approx(std::log(0.5) - std::log(1.6)));
}

TEST_CASE("splitting a Gaussian approximately conserves its rendered mass") {
  GaussianCloud c = GaussianCloud::zeros(1, true);
  c.means.mutable_values()[2] = 4.0;
  for (int k = 0; k < 3; ++k) c.log_scales.mutable_values()[k] = std::log(0.3);
  c.opacity_logits.mutable_values()[0] = logit(0.6);
  ScreenGradStats stats;
  stats.reset(1);
  stats.grad_norm_sum = {1.0};
  stats.visible_count = {1};
  DensifyOptions options;
  options.seed = 3;
  const auto r = densify_and_prune(c, stats, options);
  REQUIRE(r.split == 1);
  const Camera cam = front_camera(32, 32, 30.0);
  Tape tape(false);
  const auto before = rasterize(tape, c, Tensor::zeros({1, 3}), 0, cam);
  const auto after = rasterize(tape, r.cloud, Tensor::zeros({2, 3}), 0, cam);
  double l1 = 0.0;
  for (std::size_t i = 0; i < before.color.numel(); ++i) l1 += std::abs(before.color[i] - after.color[i]);
  CHECK(l1 / before.color.numel() < 0.05);
}

TEST_CASE("densify respects the Gaussian budget") {
  std::mt19937_64 rng(8);
  auto s = random_scene(4, 0, rng);
  ScreenGradStats stats;
  stats.reset(4);
  stats.grad_norm_sum = {1, 2, 3, 4};
  stats.visible_count = {1, 1, 1, 1};
  DensifyOptions o;
  o.max_gaussians = 6;
  const auto r = densify_and_prune(s.cloud, stats, o);
  CHECK(r.cloud.size() == 6);
}

TEST_CASE("screen gradient statistics count each on-screen Gaussian once per backward") {
  std::mt19937_64 rng(9);
  auto s = random_scene(5, 1, rng);
  const Camera cam = front_camera(16, 16, 14.0);
  ScreenGradStats stats;
  Tape tape;
  const auto out = rasterize(tape, s.cloud, s.sh, 1, cam, {}, &stats);
  tape.backward(ad::sum(tape, out.color));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(stats.visible_count[i] <= 1);
    CHECK(stats.grad_norm_sum[i] >= 0.0);
  }
}
