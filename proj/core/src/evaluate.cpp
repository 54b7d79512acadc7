#include "wildgs/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"
#include "wildgs/photometric.hpp"
#include "wildgs/trainer.hpp"

namespace wildgs {

double psnr(const ad::Tensor& a, const ad::Tensor& b, const ad::Tensor& mask) {
  if (a.shape() != b.shape() || a.rank() != 4) throw ContractViolation("psnr: images must share an N x C x H x W shape");
  const int C = a.size(1);
  const std::size_t hw = static_cast<std::size_t>(a.size(2)) * a.size(3);
  if (mask.defined() && mask.numel() != hw * a.size(0)) throw ContractViolation("psnr: mask size differs");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const std::size_t n = i / (hw * C), p = i % hw;
    if (mask.defined() && !(mask[n * hw + p] > 0.5)) continue;
    const double d = a[i] - b[i];
    se += d * d;
    ++count;
  }
  if (count == 0) throw ContractViolation("psnr: mask selects no pixels");
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim_value(const ad::Tensor& a, const ad::Tensor& b, const ad::Tensor& mask) {
  ad::Tape tape(false);
  if (!mask.defined()) return ssim(tape, a, b).item();
  return ssim(tape, ad::mul_channels(tape, a, mask), ad::mul_channels(tape, b, mask)).item();
}

EvalReport evaluate(const WildGsModel& model, const DatasetManifest& data, const std::vector<int>& views) {
  EvalReport report;
  for (int i : views) {
    const ViewData v = load_view(data, i);
    const RenderOutput out = render_with_reference(model, v.image, v.camera, v.camera);
    report.views.push_back({i, psnr(out.color, v.image, v.mask), ssim_value(out.color, v.image, v.mask)});
  }
  if (!report.views.empty()) {
    for (const auto& s : report.views) {
      report.mean_psnr += s.psnr;
      report.mean_ssim += s.ssim;
    }
    report.mean_psnr /= static_cast<double>(report.views.size());
    report.mean_ssim /= static_cast<double>(report.views.size());
  }
  return report;
}

void write_report(std::ostream& out, const EvalReport& report) {
  out << "view\tpsnr\tssim\n";
  char buf[128];
  for (const auto& s : report.views) {
    std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\n", s.view, s.psnr, s.ssim);
    out << buf;
  }
  if (!report.views.empty()) {
    std::snprintf(buf, sizeof buf, "mean\t%.6f\t%.6f\n", report.mean_psnr, report.mean_ssim);
    out << buf;
  }
}

}  // namespace wildgs
