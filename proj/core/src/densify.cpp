#include "wildgs/densify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "wildgs/errors.hpp"

namespace wildgs {

namespace {

struct Row {
  int source;
  bool fresh;
  Eigen::Vector3d mean;
  Eigen::Vector3d log_scale;
};

}  // namespace

DensifyResult densify_and_prune(const GaussianCloud& cloud, const ScreenGradStats& stats,
                                const DensifyOptions& options) {
  const int n = static_cast<int>(cloud.size());
  if (n > 0) cloud.validate();
  if (stats.grad_norm_sum.size() != static_cast<std::size_t>(n) ||
      stats.visible_count.size() != static_cast<std::size_t>(n)) {
    throw ContractViolation("densify: gradient statistics do not match the cloud size");
  }
  const auto mu = cloud.means.values();
  const auto ls = cloud.log_scales.values();
  const auto rq = cloud.rotations.values();
  const auto op = cloud.opacity_logits.values();

  std::vector<int> candidates;
  std::vector<double> mean_grad(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (stats.visible_count[i] > 0) mean_grad[i] = stats.grad_norm_sum[i] / stats.visible_count[i];
    if (mean_grad[i] >= options.grad_threshold) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return mean_grad[a] > mean_grad[b]; });

  const double boundary = options.percent_dense * options.scene_extent;
  std::vector<std::uint8_t> split_parent(n, 0);
  std::vector<int> clones, splits;
  std::size_t budget = options.max_gaussians == 0 ? std::numeric_limits<std::size_t>::max()
                                                  : (options.max_gaussians > static_cast<std::size_t>(n)
                                                         ? options.max_gaussians - n
                                                         : 0);
  for (int i : candidates) {
    if (budget == 0) break;
    const double max_scale = std::exp(std::max({ls[3 * i], ls[3 * i + 1], ls[3 * i + 2]}));
    if (max_scale <= boundary) {
      clones.push_back(i);
    } else {
      splits.push_back(i);
      split_parent[i] = 1;
    }
    --budget;  // either way the count grows by one
  }
  std::sort(clones.begin(), clones.end());
  std::sort(splits.begin(), splits.end());

  std::vector<Row> rows;
  rows.reserve(n + clones.size() + 2 * splits.size());
  auto mean_of = [&](int i) { return Eigen::Vector3d(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]); };
  auto scale_of = [&](int i) { return Eigen::Vector3d(ls[3 * i], ls[3 * i + 1], ls[3 * i + 2]); };
  for (int i = 0; i < n; ++i)
    if (!split_parent[i]) rows.push_back({i, false, mean_of(i), scale_of(i)});
  for (int i : clones) rows.push_back({i, true, mean_of(i), scale_of(i)});

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shrink = std::log(options.split_scale_divisor);
  for (int i : splits) {
    const Eigen::Matrix3d R =
        rotation_from_quaternion(Eigen::Vector4d(rq[4 * i], rq[4 * i + 1], rq[4 * i + 2], rq[4 * i + 3]));
    const Eigen::Vector3d s = scale_of(i).array().exp();
    for (int child = 0; child < 2; ++child) {
      const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
      const Eigen::Vector3d offset = R * s.cwiseProduct(z);
      rows.push_back({i, true, mean_of(i) + offset, scale_of(i) - Eigen::Vector3d::Constant(shrink)});
    }
  }

  DensifyResult result;
  result.cloned = static_cast<int>(clones.size());
  result.split = static_cast<int>(splits.size());
  std::vector<Row> kept;
  kept.reserve(rows.size());
  for (const Row& r : rows) {
    if (sigmoid(op[r.source]) < options.min_opacity) {
      ++result.pruned;
      continue;
    }
    kept.push_back(r);
  }

  const int m = static_cast<int>(kept.size());
  GaussianCloud out = GaussianCloud::zeros(m, true);
  auto omu = out.means.mutable_values();
  auto ols = out.log_scales.mutable_values();
  auto orq = out.rotations.mutable_values();
  auto oop = out.opacity_logits.mutable_values();
  auto ofi = out.intrinsic.mutable_values();
  const auto fin = cloud.intrinsic.values();
  for (int j = 0; j < m; ++j) {
    const Row& r = kept[j];
    const int i = r.source;
    for (int k = 0; k < 3; ++k) {
      omu[3 * j + k] = r.mean[k];
      ols[3 * j + k] = r.log_scale[k];
    }
    for (int k = 0; k < 4; ++k) orq[4 * j + k] = rq[4 * i + k];
    oop[j] = op[i];
    std::copy_n(fin.begin() + i * kIntrinsicDim, kIntrinsicDim, ofi.begin() + j * kIntrinsicDim);
    result.source.push_back(i);
    result.fresh.push_back(r.fresh ? 1 : 0);
  }
  result.cloud = std::move(out);
  return result;
}

}  // namespace wildgs
