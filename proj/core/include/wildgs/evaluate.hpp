#pragma once

#include <iosfwd>
#include <vector>

#include "wildgs/dataset.hpp"
#include "wildgs/model.hpp"

namespace wildgs {

/// 10 log10(1 / MSE) over pixels where `mask` (1 x 1 x H x W) is > 0.5, or
/// all pixels for an undefined mask. Identical inputs give +inf.
double psnr(const ad::Tensor& a, const ad::Tensor& b, const ad::Tensor& mask = {});

/// Mean SSIM; with a mask both images are multiplied by it first.
double ssim_value(const ad::Tensor& a, const ad::Tensor& b, const ad::Tensor& mask = {});

struct ViewScore {
  int view = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewScore> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Scores each listed view rendered with appearance encoded from its own
/// image, over its static pixels when a ground-truth mask exists.
EvalReport evaluate(const WildGsModel& model, const DatasetManifest& data, const std::vector<int>& views);

/// Header "view<TAB>psnr<TAB>ssim", one row per view, then a "mean" row.
void write_report(std::ostream& out, const EvalReport& report);

}  // namespace wildgs
