// conv2d via im2col + GEMM.

#include <Eigen/Core>
#include <string>

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"

namespace wildgs::ad {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ConvGeom {
  int c, h, w, k, stride, pad, ho, wo;
  int rows() const { return c * k * k; }
  int cols() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const int ncols = g.cols();
  for (int ch = 0; ch < g.c; ++ch)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = cols + static_cast<std::size_t>((ch * g.k + ki) * g.k + kj) * ncols;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          double* dst = row + oi * g.wo;
          if (ii < 0 || ii >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(ch) * g.h + ii) * g.w;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            dst[oj] = (jj >= 0 && jj < g.w) ? src[jj] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeom& g, double* x) {
  const int ncols = g.cols();
  for (int ch = 0; ch < g.c; ++ch)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row = cols + static_cast<std::size_t>((ch * g.k + ki) * g.k + kj) * ncols;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          const double* src = row + oi * g.wo;
          double* dst = x + (static_cast<std::size_t>(ch) * g.h + ii) * g.w;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.w) dst[jj] += src[oj];
          }
        }
      }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (x.rank() != 4 || weight.rank() != 4) {
    throw ContractViolation("conv2d: expected N x C x H x W input and O x C x K x K weight, got " +
                            shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  const int n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const int o = weight.size(0), k = weight.size(2);
  if (weight.size(1) != c || weight.size(3) != k) {
    throw ContractViolation("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                            shape_str(x.shape()));
  }
  if (bias.numel() != static_cast<std::size_t>(o)) throw ContractViolation("conv2d: bias length mismatch");
  if (stride < 1 || padding < 0) throw ContractViolation("conv2d: bad stride/padding");
  ConvGeom g{c, h, w, k, stride, padding, 0, 0};
  g.ho = (h + 2 * padding - k) / stride + 1;
  g.wo = (w + 2 * padding - k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ContractViolation("conv2d: kernel larger than padded input");

  Tensor out = make_result(Shape{n, o, g.ho, g.wo});
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  CMapR wm(weight.values().data(), o, g.rows());
  Eigen::Map<const Eigen::VectorXd> bv(bias.values().data(), o);
  const std::size_t in_stride = static_cast<std::size_t>(c) * h * w;
  const std::size_t out_stride = static_cast<std::size_t>(o) * g.cols();
  for (int b = 0; b < n; ++b) {
    im2col(x.values().data() + b * in_stride, g, cols.data());
    MapR om(out.mutable_values().data() + b * out_stride, o, g.cols());
    om.noalias() = wm * CMapR(cols.data(), g.rows(), g.cols());
    om.colwise() += bv;
  }
  check_finite(out, "conv2d");

  if (tape.wants({&x, &weight, &bias})) {
    tape.record("conv2d", out, [xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node(), g, n,
                                o, in_stride, out_stride] {
      const bool need_x = xn->requires_grad, need_w = wn->requires_grad, need_b = bn->requires_grad;
      if (need_x) xn->ensure_grad();
      if (need_w) wn->ensure_grad();
      if (need_b) bn->ensure_grad();
      std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
      CMapR wm(wn->value.data(), o, g.rows());
      for (int b = 0; b < n; ++b) {
        CMapR go(on->grad.data() + b * out_stride, o, g.cols());
        if (need_b) Eigen::Map<Eigen::VectorXd>(bn->grad.data(), o) += go.rowwise().sum();
        if (need_w) {
          im2col(xn->value.data() + b * in_stride, g, cols.data());
          MapR(wn->grad.data(), o, g.rows()).noalias() += go * CMapR(cols.data(), g.rows(), g.cols()).transpose();
        }
        if (need_x) {
          MapR(cols.data(), g.rows(), g.cols()).noalias() = wm.transpose() * go;
          col2im(cols.data(), g, xn->grad.data() + b * in_stride);
        }
      }
    });
  }
  return out;
}

}  // namespace wildgs::ad
