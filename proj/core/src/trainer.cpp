#include "wildgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wildgs/densify.hpp"
#include "wildgs/errors.hpp"
#include "wildgs/evaluate.hpp"
#include "wildgs/ops.hpp"
#include "wildgs/photometric.hpp"

namespace wildgs {

LossTerms total_loss(ad::Tape& tape, const RenderOutput& render, const ad::Tensor& reference,
                     const ad::Tensor& mask, const ad::Tensor& depth_estimate, const TrainConfig& cfg, int iter) {
  const bool warm = iter < cfg.resolved_warmup();
  LossTerms out;
  out.lambda_m = lambda_m_at(cfg, iter);

  const ad::Tensor li =
      masked_photometric_loss(tape, reference, render.color, warm ? ad::Tensor() : mask, cfg.lambda_i);
  out.photometric = li.item();
  out.total = li;

  if (mask.defined()) {
    const ad::Tensor lm = mask_regularizer(tape, mask);
    out.mask_reg = lm.item();
    out.total = ad::add(tape, out.total, ad::scale(tape, lm, out.lambda_m));
  }
  if (!warm && depth_estimate.defined() && cfg.lambda_d > 0.0) {
    DepthLossStatus status;
    const ad::Tensor ld = depth_pearson_loss(tape, render.depth, depth_estimate, mask, cfg.mask_threshold, &status);
    out.depth = ld.item();
    out.depth_degenerate = status.degenerate;
    out.total = ad::add(tape, out.total, ad::scale(tape, ld, cfg.lambda_d));
  }
  return out;
}

std::string log_header() { return "iter\tL_I\tL_M\tL_D\tlambda_M\tpsnr"; }

std::string format_log_row(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.6g\t%.6g\t%.6g\t%.6g\t%.4f", r.iter, r.photometric, r.mask_reg, r.depth,
                r.lambda_m, r.psnr);
  return buf;
}

ViewSampler::ViewSampler(std::vector<int> views, std::uint64_t seed) : views_(std::move(views)), rng_(seed) {
  if (views_.empty()) throw ContractViolation("view sampler needs at least one view");
}

int ViewSampler::next() {
  if (pos_ == order_.size()) {
    order_ = views_;
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  return order_[pos_++];
}

namespace {

std::vector<int> iota_views(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

Trainer::Trainer(WildGsModel model, std::vector<ViewData> views)
    : model_(std::move(model)),
      views_(std::move(views)),
      sampler_(views_.empty() ? std::vector<int>{0} : iota_views(views_.size()), model_.config.seed ^ 0x5eedULL) {
  if (views_.empty()) throw ContractViolation("training needs at least one view");
  model_.config.validate();
  stats_.reset(model_.cloud.size());
}

std::vector<ParamGroup> Trainer::param_groups() {
  const TrainConfig& c = model_.config;
  std::vector<ParamGroup> groups = {
      {"position", {model_.cloud.means}, c.lr_position * model_.scene_extent},
      {"scaling", {model_.cloud.log_scales}, c.lr_scaling},
      {"rotation", {model_.cloud.rotations}, c.lr_rotation},
      {"opacity", {model_.cloud.opacity_logits}, c.lr_opacity},
      {"intrinsic", {model_.cloud.intrinsic}, c.lr_intrinsic},
      {"fallback", {model_.fallback}, c.lr_fallback},
      {"networks", {}, c.lr_network},
  };
  for (auto& p : model_.network_parameters()) groups.back().params.push_back(p.tensor);
  return groups;
}

bool Trainer::step() {
  const TrainConfig& cfg = model_.config;
  const int view = sampler_.next();
  const ViewData& v = views_[view];
  const bool warm = in_warmup();

  std::vector<ParamGroup> groups = param_groups();
  auto zero_all = [&] {
    for (auto& g : groups)
      for (auto& p : g.params) p.zero_grad();
  };

  LossTerms terms;
  RenderOutput render;
  try {
    ad::Tape tape;
    const WildGsModel::Reference ref = model_.encode_reference(tape, v.image, v.camera, !warm);
    if (!warm && cfg.use_local && ref.backprojected == 0 && on_warning) {
      on_warning("iteration " + std::to_string(iter_) + ": nothing back-projected; triplane is empty");
    }
    render = model_.render(tape, ref.context, v.camera, &stats_);
    terms = total_loss(tape, render, v.image, ref.mask, cfg.use_depth ? v.depth : ad::Tensor(), cfg, iter_);
    if (terms.depth_degenerate && on_warning) {
      on_warning("iteration " + std::to_string(iter_) + ": depth loss skipped (too few pixels or constant depth)");
    }
    if (!std::isfinite(terms.total.item())) throw NumericFault("total loss is not finite");
    tape.backward(terms.total);
  } catch (const NumericFault& e) {
    zero_all();
    ++rollbacks_;
    if (on_warning) on_warning("iteration " + std::to_string(iter_) + " rolled back: " + e.what());
    ++iter_;
    return false;
  }

  adam_step(groups, optimizer_);
  zero_all();
  losses_.push_back(terms.total.item());

  const int done = iter_ + 1;
  if (done % cfg.log_interval == 0 || done == cfg.iterations) {
    LogRow row{iter_, terms.photometric, terms.mask_reg, terms.depth, terms.lambda_m, psnr(render.color, v.image)};
    log_.push_back(row);
    if (on_log) on_log(row);
  }

  const double until = cfg.densify_until_fraction * cfg.iterations;
  if (done >= cfg.densify_from && done % cfg.densify_interval == 0 && done < until) densify();
  ++iter_;
  return true;
}

void Trainer::densify() {
  const TrainConfig& cfg = model_.config;
  DensifyOptions opt;
  opt.grad_threshold = cfg.densify_grad_threshold;
  opt.min_opacity = cfg.min_opacity;
  opt.percent_dense = cfg.percent_dense;
  opt.scene_extent = model_.scene_extent;
  opt.max_gaussians = static_cast<std::size_t>(cfg.max_gaussians);
  opt.seed = cfg.seed * 1000003ULL + densify_calls_++;
  DensifyResult res = densify_and_prune(model_.cloud, stats_, opt);

  // Gaussian groups are the first five, one tensor each, in cloud order.
  const int widths[5] = {3, 3, 4, 1, kIntrinsicDim};
  for (int g = 0; g < 5 && g < static_cast<int>(optimizer_.groups.size()); ++g) {
    if (!optimizer_.groups[g].moments.empty()) {
      gather_moment_rows(optimizer_.groups[g].moments[0], widths[g], res.source, res.fresh);
    }
  }
  model_.cloud = std::move(res.cloud);
  for (ad::Tensor& t : model_.cloud.tensors()) t.set_requires_grad(true);
  stats_.reset(model_.cloud.size());
}

void Trainer::run(int iterations) {
  for (int i = 0; i < iterations; ++i) step();
}

RenderOutput render_with_reference(const WildGsModel& model, const ad::Tensor& image, const Camera& reference,
                                   const Camera& camera) {
  ad::Tape tape(false);
  const bool with_triplane = model.config.iterations > model.config.resolved_warmup();
  const WildGsModel::Reference ref = model.encode_reference(tape, image, reference, with_triplane);
  return model.render(tape, ref.context, camera);
}

}  // namespace wildgs
