#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "wildgs/adam.hpp"
#include "wildgs/config.hpp"
#include "wildgs/dataset.hpp"
#include "wildgs/depth_loss.hpp"
#include "wildgs/model.hpp"

namespace wildgs {

struct LossTerms {
  ad::Tensor total;
  double photometric = 0.0;  // L^I
  double mask_reg = 0.0;     // L^M
  double depth = 0.0;        // L^D
  double lambda_m = 0.0;
  bool depth_degenerate = false;
};

/// L^I + lambda^M L^M + lambda^D L^D at `iter`. During warm-up the
/// photometric term ignores the mask and the depth term is dropped. An
/// undefined mask disables the mask terms, an undefined estimate the depth
/// term.
LossTerms total_loss(ad::Tape& tape, const RenderOutput& render, const ad::Tensor& reference,
                     const ad::Tensor& mask, const ad::Tensor& depth_estimate, const TrainConfig& cfg, int iter);

struct LogRow {
  int iter = 0;
  double photometric = 0.0, mask_reg = 0.0, depth = 0.0, lambda_m = 0.0, psnr = 0.0;
};

/// Tab-separated metrics log header and row.
std::string log_header();
std::string format_log_row(const LogRow& row);

/// Random-without-replacement epochs over a fixed index set.
class ViewSampler {
 public:
  ViewSampler(std::vector<int> views, std::uint64_t seed);
  int next();

 private:
  std::vector<int> views_, order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

/// Owns the model, optimizer and densification statistics for one run.
class Trainer {
 public:
  Trainer(WildGsModel model, std::vector<ViewData> views);

  /// Runs one iteration. Returns false when it was rolled back because a
  /// value became non-finite.
  bool step();
  void run(int iterations);

  int iteration() const { return iter_; }
  bool in_warmup() const { return iter_ < model_.config.resolved_warmup(); }
  const WildGsModel& model() const { return model_; }
  WildGsModel& model() { return model_; }
  const std::vector<LogRow>& log() const { return log_; }
  int rollbacks() const { return rollbacks_; }
  std::int64_t optimizer_faults() const { return optimizer_.faults; }
  /// Per-iteration total loss, for convergence checks.
  const std::vector<double>& loss_history() const { return losses_; }

  /// Called with every logged row (e.g. to stream the log to a file).
  std::function<void(const LogRow&)> on_log;
  /// Called for non-fatal conditions such as an empty back-projection.
  std::function<void(const std::string&)> on_warning;

 private:
  std::vector<ParamGroup> param_groups();
  void densify();

  WildGsModel model_;
  std::vector<ViewData> views_;
  ViewSampler sampler_;
  OptimizerState optimizer_;
  ScreenGradStats stats_;
  std::vector<LogRow> log_;
  std::vector<double> losses_;
  int iter_ = 0;
  int rollbacks_ = 0;
  std::uint64_t densify_calls_ = 0;
};

/// Renders view `camera` with appearance taken from (image, reference
/// camera), using the pipeline stage the model was trained into.
RenderOutput render_with_reference(const WildGsModel& model, const ad::Tensor& image, const Camera& reference,
                                   const Camera& camera);

}  // namespace wildgs
