#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace wildgs {

/// Training hyper-parameters. The text form is flat `key = value` lines
/// using the field names below; `#` starts a comment.
struct TrainConfig {
  int iterations = 30000;
  int warmup_iters = -1;  // -1: 10% of iterations
  double lambda_m_start = 0.4;
  double lambda_m_end = 0.1;
  double lambda_d = 0.05;
  double lambda_i = 0.8;
  double mask_threshold = 0.5;

  double lr_position = 1.6e-4;  // scaled by the scene extent
  double lr_scaling = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_intrinsic = 1e-3;
  double lr_network = 1e-3;
  double lr_fallback = 1e-3;

  int sh_degree = 1;
  int triplane_resolution = 128;
  double crop_ratio = 0.5;
  std::uint64_t seed = 0;

  bool use_global = true;
  bool use_local = true;
  bool use_mask = true;
  bool use_depth = true;

  int densify_from = 500;
  int densify_interval = 200;
  double densify_until_fraction = 0.6;
  double densify_grad_threshold = 2e-4;
  double min_opacity = 0.01;
  double percent_dense = 0.01;
  int max_gaussians = 0;  // 0: unbounded

  double background = 0.0;  // grey level behind the scene
  int log_interval = 100;

  /// Warm-up length after resolving the -1 default.
  int resolved_warmup() const;

  /// Throws ContractViolation naming the offending field.
  void validate() const;

  /// Sets one field from its text value; unknown keys and malformed values
  /// throw ContractViolation.
  void set(std::string_view key, std::string_view value);

  /// Calls f(name, value-as-double) for every field in declaration order.
  template <class F>
  void for_each(F&& f) const {
    const_cast<TrainConfig*>(this)->visit([&](std::string_view name, auto& field) {
      f(name, static_cast<double>(field));
    });
  }

  /// Sets a field from a double (checkpoint round-trip). Unknown keys throw.
  void set_number(std::string_view key, double value);

  template <class F>
  void visit(F&& f) {
    f("iterations", iterations);
    f("warmup_iters", warmup_iters);
    f("lambda_m_start", lambda_m_start);
    f("lambda_m_end", lambda_m_end);
    f("lambda_d", lambda_d);
    f("lambda_i", lambda_i);
    f("mask_threshold", mask_threshold);
    f("lr_position", lr_position);
    f("lr_scaling", lr_scaling);
    f("lr_rotation", lr_rotation);
    f("lr_opacity", lr_opacity);
    f("lr_intrinsic", lr_intrinsic);
    f("lr_network", lr_network);
    f("lr_fallback", lr_fallback);
    f("sh_degree", sh_degree);
    f("triplane_resolution", triplane_resolution);
    f("crop_ratio", crop_ratio);
    f("seed", seed);
    f("use_global", use_global);
    f("use_local", use_local);
    f("use_mask", use_mask);
    f("use_depth", use_depth);
    f("densify_from", densify_from);
    f("densify_interval", densify_interval);
    f("densify_until_fraction", densify_until_fraction);
    f("densify_grad_threshold", densify_grad_threshold);
    f("min_opacity", min_opacity);
    f("percent_dense", percent_dense);
    f("max_gaussians", max_gaussians);
    f("background", background);
    f("log_interval", log_interval);
  }
};

TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);
std::string to_text(const TrainConfig& config);

/// lambda^M at `iter`: lambda_m_start through warm-up, then linear to
/// lambda_m_end at the final iteration.
double lambda_m_at(const TrainConfig& config, int iter);

}  // namespace wildgs
