#include "wildgs/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wildgs/errors.hpp"

namespace wildgs::ad {
namespace {

using NodePtr = std::shared_ptr<Node>;
using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, int rank, const char* op) {
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(t.shape()));
}

// Gradient sink for an input node, or nullptr when it needs none.
double* sink(const NodePtr& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

struct Dims4 {
  int n, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* op) {
  require_rank(t, 4, op);
  return {t.size(0), t.size(1), t.size(2), t.size(3)};
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  check_finite(out, "add");
  if (tape.wants({&a, &b})) {
    tape.record("add", out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
      if (double* g = sink(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  check_finite(out, "sub");
  if (tape.wants({&a, &b})) {
    tape.record("sub", out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
      if (double* g = sink(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] -= on->grad[i];
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  check_finite(out, "mul");
  if (tape.wants({&a, &b})) {
    tape.record("mul", out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i] * bn->value[i];
      if (double* g = sink(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i] * an->value[i];
    });
  }
  return out;
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "div");
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] / b[i];
  check_finite(out, "div");
  if (tape.wants({&a, &b})) {
    tape.record("div", out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i] / bn->value[i];
      if (double* g = sink(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          g[i] -= on->grad[i] * on->value[i] / bn->value[i];
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * s;
  check_finite(out, "scale");
  if (tape.wants({&a})) {
    tape.record("scale", out, [an = a.node(), on = out.node(), s] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + s;
  check_finite(out, "add_scalar");
  if (tape.wants({&a})) {
    tape.record("add_scalar", out, [an = a.node(), on = out.node()] {
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s) {
  require(s.numel() == 1, "scale_by: factor must be a scalar");
  const double k = s.item();
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * k;
  check_finite(out, "scale_by");
  if (tape.wants({&a, &s})) {
    tape.record("scale_by", out, [an = a.node(), sn = s.node(), on = out.node()] {
      const double k = sn->value[0];
      if (double* g = sink(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i] * k;
      if (double* g = sink(sn)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < on->grad.size(); ++i) acc += on->grad[i] * an->value[i];
        g[0] += acc;
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  check_finite(out, "relu");
  if (tape.wants({&x})) {
    tape.record("relu", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn))
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          if (xn->value[i] > 0.0) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-x[i]));
  check_finite(out, "sigmoid");
  if (tape.wants({&x})) {
    tape.record("sigmoid", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
          const double s = on->value[i];
          g[i] += on->grad[i] * s * (1.0 - s);
        }
    });
  }
  return out;
}

Tensor square(Tape& tape, const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * x[i];
  check_finite(out, "square");
  if (tape.wants({&x})) {
    tape.record("square", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += 2.0 * xn->value[i] * on->grad[i];
    });
  }
  return out;
}

Tensor abs(Tape& tape, const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::abs(x[i]);
  check_finite(out, "abs");
  if (tape.wants({&x})) {
    tape.record("abs", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
          const double v = xn->value[i];
          g[i] += v > 0.0 ? on->grad[i] : (v < 0.0 ? -on->grad[i] : 0.0);
        }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = make_result(Shape{});
  out.mutable_values()[0] = acc;
  check_finite(out, "sum");
  if (tape.wants({&x})) {
    tape.record("sum", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn)) {
        const double go = on->grad[0];
        for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += go;
      }
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  require(x.numel() > 0, "mean of empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = make_result(Shape{});
  out.mutable_values()[0] = acc * inv;
  check_finite(out, "mean");
  if (tape.wants({&x})) {
    tape.record("mean", out, [xn = x.node(), on = out.node(), inv] {
      if (double* g = sink(xn)) {
        const double go = on->grad[0] * inv;
        for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += go;
      }
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(numel_of(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out = make_result(std::move(shape));
  std::copy(x.values().begin(), x.values().end(), out.mutable_values().begin());
  if (tape.wants({&x})) {
    tape.record("reshape", out, [xn = x.node(), on = out.node()] {
      if (double* g = sink(xn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.size(0), k = a.size(1), n = b.size(1);
  require(b.size(0) == k, "matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                              shape_str(b.shape()));
  Tensor out = make_result(Shape{m, n});
  MapR(out.mutable_values().data(), m, n).noalias() =
      CMapR(a.values().data(), m, k) * CMapR(b.values().data(), k, n);
  check_finite(out, "matmul");
  if (tape.wants({&a, &b})) {
    tape.record("matmul", out, [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      CMapR go(on->grad.data(), m, n);
      if (double* g = sink(an)) MapR(g, m, k).noalias() += go * CMapR(bn->value.data(), k, n).transpose();
      if (double* g = sink(bn)) MapR(g, k, n).noalias() += CMapR(an->value.data(), m, k).transpose() * go;
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int n = x.size(0), in = x.size(1), outd = weight.size(0);
  require(weight.size(1) == in, "linear: weight " + shape_str(weight.shape()) +
                                    " does not accept input " + shape_str(x.shape()));
  require(bias.numel() == static_cast<std::size_t>(outd), "linear: bias length mismatch");
  Tensor out = make_result(Shape{n, outd});
  MapR o(out.mutable_values().data(), n, outd);
  o.noalias() = CMapR(x.values().data(), n, in) * CMapR(weight.values().data(), outd, in).transpose();
  Eigen::Map<const Eigen::RowVectorXd> bv(bias.values().data(), outd);
  o.rowwise() += bv;
  check_finite(out, "linear");
  if (tape.wants({&x, &weight, &bias})) {
    tape.record("linear", out, [xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node(),
                                n, in, outd] {
      CMapR go(on->grad.data(), n, outd);
      if (double* g = sink(xn)) MapR(g, n, in).noalias() += go * CMapR(wn->value.data(), outd, in);
      if (double* g = sink(wn))
        MapR(g, outd, in).noalias() += go.transpose() * CMapR(xn->value.data(), n, in);
      if (double* g = sink(bn)) Eigen::Map<Eigen::RowVectorXd>(g, outd) += go.colwise().sum();
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const int n = a.size(0), p = a.size(1), q = b.size(1);
  require(b.size(0) == n, "concat_cols: row counts differ");
  Tensor out = make_result(Shape{n, p + q});
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.values().begin() + i * p, p, o.begin() + i * (p + q));
    std::copy_n(b.values().begin() + i * q, q, o.begin() + i * (p + q) + p);
  }
  if (tape.wants({&a, &b})) {
    tape.record("concat_cols", out, [an = a.node(), bn = b.node(), on = out.node(), n, p, q] {
      double* ga = sink(an);
      double* gb = sink(bn);
      for (int i = 0; i < n; ++i) {
        const double* go = on->grad.data() + i * (p + q);
        if (ga)
          for (int j = 0; j < p; ++j) ga[i * p + j] += go[j];
        if (gb)
          for (int j = 0; j < q; ++j) gb[i * q + j] += go[p + j];
      }
    });
  }
  return out;
}

Tensor select_cols(Tape& tape, const Tensor& x, std::span<const int> cols) {
  require_rank(x, 2, "select_cols");
  const int n = x.size(0), k = x.size(1), m = static_cast<int>(cols.size());
  for (int c : cols) require(c >= 0 && c < k, "select_cols: column out of range");
  Tensor out = make_result(Shape{n, m});
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) o[i * m + j] = x[i * k + cols[j]];
  if (tape.wants({&x})) {
    tape.record("select_cols", out,
                [xn = x.node(), on = out.node(), idx = std::vector<int>(cols.begin(), cols.end()), n,
                 k, m] {
                  if (double* g = sink(xn))
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < m; ++j) g[i * k + idx[j]] += on->grad[i * m + j];
                });
  }
  return out;
}

Tensor affine_cols(Tape& tape, const Tensor& x, std::span<const double> offset,
                   std::span<const double> inv_extent) {
  require_rank(x, 2, "affine_cols");
  const int n = x.size(0), k = x.size(1);
  require(offset.size() == static_cast<std::size_t>(k) && inv_extent.size() == offset.size(),
          "affine_cols: per-column constants mismatch");
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) o[i * k + j] = (x[i * k + j] - offset[j]) * inv_extent[j];
  check_finite(out, "affine_cols");
  if (tape.wants({&x})) {
    tape.record("affine_cols", out,
                [xn = x.node(), on = out.node(),
                 s = std::vector<double>(inv_extent.begin(), inv_extent.end()), n, k] {
                  if (double* g = sink(xn))
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < k; ++j) g[i * k + j] += on->grad[i * k + j] * s[j];
                });
  }
  return out;
}

Tensor broadcast_rows(Tape& tape, const Tensor& v, int n) {
  require(v.rank() == 1 || (v.rank() == 2 && v.size(0) == 1), "broadcast_rows: expected a vector");
  require(n >= 0, "broadcast_rows: negative row count");
  const int d = static_cast<int>(v.numel());
  Tensor out = make_result(Shape{n, d});
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i) std::copy(v.values().begin(), v.values().end(), o.begin() + i * d);
  if (tape.wants({&v})) {
    tape.record("broadcast_rows", out, [vn = v.node(), on = out.node(), n, d] {
      if (double* g = sink(vn))
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) g[j] += on->grad[i * d + j];
    });
  }
  return out;
}

Tensor where_rows(Tape& tape, std::span<const std::uint8_t> take_a, const Tensor& a,
                  const Tensor& v) {
  require_rank(a, 2, "where_rows");
  const int n = a.size(0), d = a.size(1);
  require(take_a.size() == static_cast<std::size_t>(n), "where_rows: flag count mismatch");
  require(v.numel() == static_cast<std::size_t>(d), "where_rows: fallback length mismatch");
  Tensor out = make_result(a.shape());
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) o[i * d + j] = take_a[i] ? a[i * d + j] : v[j];
  if (tape.wants({&a, &v})) {
    tape.record("where_rows", out,
                [an = a.node(), vn = v.node(), on = out.node(),
                 flags = std::vector<std::uint8_t>(take_a.begin(), take_a.end()), n, d] {
                  double* ga = sink(an);
                  double* gv = sink(vn);
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) {
                      const double go = on->grad[i * d + j];
                      if (flags[i]) {
                        if (ga) ga[i * d + j] += go;
                      } else if (gv) {
                        gv[j] += go;
                      }
                    }
                });
  }
  return out;
}

Tensor upsample2x(Tape& tape, const Tensor& x) {
  const auto [n, c, h, w] = dims4(x, "upsample2x");
  Tensor out = make_result(Shape{n, c, 2 * h, 2 * w});
  auto o = out.mutable_values();
  const int w2 = 2 * w;
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < w2; ++j) o[(p * 2 * h + i) * w2 + j] = x[(p * h + i / 2) * w + j / 2];
  if (tape.wants({&x})) {
    tape.record("upsample2x", out, [xn = x.node(), on = out.node(), n, c, h, w] {
      if (double* g = sink(xn)) {
        const int w2 = 2 * w;
        for (int p = 0; p < n * c; ++p)
          for (int i = 0; i < 2 * h; ++i)
            for (int j = 0; j < w2; ++j) g[(p * h + i / 2) * w + j / 2] += on->grad[(p * 2 * h + i) * w2 + j];
      }
    });
  }
  return out;
}

Tensor avg_pool2x2(Tape& tape, const Tensor& x) {
  const auto [n, c, h, w] = dims4(x, "avg_pool2x2");
  require(h % 2 == 0 && w % 2 == 0, "avg_pool2x2: spatial extents must be even");
  const int ho = h / 2, wo = w / 2;
  Tensor out = make_result(Shape{n, c, ho, wo});
  auto o = out.mutable_values();
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const double* r0 = x.values().data() + (p * h + 2 * i) * w + 2 * j;
        const double* r1 = r0 + w;
        o[(p * ho + i) * wo + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  if (tape.wants({&x})) {
    tape.record("avg_pool2x2", out, [xn = x.node(), on = out.node(), n, c, h, w] {
      if (double* g = sink(xn)) {
        const int ho = h / 2, wo = w / 2;
        for (int p = 0; p < n * c; ++p)
          for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
              const double go = 0.25 * on->grad[(p * ho + i) * wo + j];
              double* r0 = g + (p * h + 2 * i) * w + 2 * j;
              r0[0] += go;
              r0[1] += go;
              r0[w] += go;
              r0[w + 1] += go;
            }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  const auto [n, c, h, w] = dims4(x, "global_avg_pool");
  const int hw = h * w;
  require(hw > 0, "global_avg_pool: empty spatial extent");
  Tensor out = make_result(Shape{n, c});
  auto o = out.mutable_values();
  for (int p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += x[p * hw + i];
    o[p] = acc / hw;
  }
  check_finite(out, "global_avg_pool");
  if (tape.wants({&x})) {
    tape.record("global_avg_pool", out, [xn = x.node(), on = out.node(), nc = n * c, hw] {
      if (double* g = sink(xn))
        for (int p = 0; p < nc; ++p) {
          const double go = on->grad[p] / hw;
          for (int i = 0; i < hw; ++i) g[p * hw + i] += go;
        }
    });
  }
  return out;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  const auto da = dims4(a, "concat_channels");
  const auto db = dims4(b, "concat_channels");
  require(da.n == db.n && da.h == db.h && da.w == db.w,
          "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int hw = da.h * da.w, ca = da.c, cb = db.c, n = da.n;
  Tensor out = make_result(Shape{n, ca + cb, da.h, da.w});
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.values().begin() + i * ca * hw, ca * hw, o.begin() + i * (ca + cb) * hw);
    std::copy_n(b.values().begin() + i * cb * hw, cb * hw, o.begin() + (i * (ca + cb) + ca) * hw);
  }
  if (tape.wants({&a, &b})) {
    tape.record("concat_channels", out, [an = a.node(), bn = b.node(), on = out.node(), n, ca, cb, hw] {
      double* ga = sink(an);
      double* gb = sink(bn);
      for (int i = 0; i < n; ++i) {
        const double* go = on->grad.data() + i * (ca + cb) * hw;
        if (ga)
          for (int k = 0; k < ca * hw; ++k) ga[i * ca * hw + k] += go[k];
        if (gb)
          for (int k = 0; k < cb * hw; ++k) gb[i * cb * hw + k] += go[ca * hw + k];
      }
    });
  }
  return out;
}

Tensor slice_channels(Tape& tape, const Tensor& x, int begin, int end) {
  const auto [n, c, h, w] = dims4(x, "slice_channels");
  require(0 <= begin && begin < end && end <= c, "slice_channels: bad channel range");
  const int hw = h * w, m = end - begin;
  Tensor out = make_result(Shape{n, m, h, w});
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i)
    std::copy_n(x.values().begin() + (i * c + begin) * hw, m * hw, o.begin() + i * m * hw);
  if (tape.wants({&x})) {
    tape.record("slice_channels", out, [xn = x.node(), on = out.node(), n, c, begin, m, hw] {
      if (double* g = sink(xn))
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < m * hw; ++k) g[(i * c + begin) * hw + k] += on->grad[i * m * hw + k];
    });
  }
  return out;
}

Tensor select_batch(Tape& tape, const Tensor& x, int index) {
  const auto [n, c, h, w] = dims4(x, "select_batch");
  require(0 <= index && index < n, "select_batch: index out of range");
  const int chw = c * h * w;
  Tensor out = make_result(Shape{c, h, w});
  std::copy_n(x.values().begin() + index * chw, chw, out.mutable_values().begin());
  if (tape.wants({&x})) {
    tape.record("select_batch", out, [xn = x.node(), on = out.node(), index, chw] {
      if (double* g = sink(xn))
        for (int k = 0; k < chw; ++k) g[index * chw + k] += on->grad[k];
    });
  }
  return out;
}

Tensor mul_channels(Tape& tape, const Tensor& x, const Tensor& m) {
  const auto dx = dims4(x, "mul_channels");
  const auto dm = dims4(m, "mul_channels");
  require(dm.n == dx.n && dm.c == 1 && dm.h == dx.h && dm.w == dx.w,
          "mul_channels: mask " + shape_str(m.shape()) + " vs " + shape_str(x.shape()));
  const int hw = dx.h * dx.w, c = dx.c, n = dx.n;
  Tensor out = make_result(x.shape());
  auto o = out.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int k = 0; k < hw; ++k) o[(i * c + ch) * hw + k] = x[(i * c + ch) * hw + k] * m[i * hw + k];
  check_finite(out, "mul_channels");
  if (tape.wants({&x, &m})) {
    tape.record("mul_channels", out, [xn = x.node(), mn = m.node(), on = out.node(), n, c, hw] {
      double* gx = sink(xn);
      double* gm = sink(mn);
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          for (int k = 0; k < hw; ++k) {
            const int idx = (i * c + ch) * hw + k;
            if (gx) gx[idx] += on->grad[idx] * mn->value[i * hw + k];
            if (gm) gm[i * hw + k] += on->grad[idx] * xn->value[idx];
          }
    });
  }
  return out;
}

Tensor channel_mean(Tape& tape, const Tensor& x) { return global_avg_pool(tape, x); }

Tensor channel_var(Tape& tape, const Tensor& x) {
  const auto [n, c, h, w] = dims4(x, "channel_var");
  const int hw = h * w;
  require(hw > 0, "channel_var: empty spatial extent");
  Tensor out = make_result(Shape{n, c});
  std::vector<double> means(static_cast<std::size_t>(n) * c);
  auto o = out.mutable_values();
  for (int p = 0; p < n * c; ++p) {
    double mu = 0.0;
    for (int i = 0; i < hw; ++i) mu += x[p * hw + i];
    mu /= hw;
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double d = x[p * hw + i] - mu;
      acc += d * d;
    }
    means[p] = mu;
    o[p] = acc / hw;
  }
  check_finite(out, "channel_var");
  if (tape.wants({&x})) {
    tape.record("channel_var", out, [xn = x.node(), on = out.node(), means, nc = n * c, hw] {
      if (double* g = sink(xn))
        for (int p = 0; p < nc; ++p) {
          const double k = 2.0 * on->grad[p] / hw;
          for (int i = 0; i < hw; ++i) g[p * hw + i] += k * (xn->value[p * hw + i] - means[p]);
        }
    });
  }
  return out;
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  const int r = window / 2;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable same-size correlation with zero padding; `transpose` applies
// the adjoint (mirrored taps), which for a symmetric kernel is the same
// filter.
void blur_planes(const double* in, double* out, int planes, int h, int w,
                 const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int p = 0; p < planes; ++p) {
    const double* src = in + static_cast<std::size_t>(p) * h * w;
    double* dst = out + static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double acc = 0.0;
        const int lo = std::max(0, r - j), hi = std::min<int>(k.size(), w + r - j);
        for (int t = lo; t < hi; ++t) acc += k[t] * src[i * w + j + t - r];
        tmp[i * w + j] = acc;
      }
    for (int i = 0; i < h; ++i) {
      const int lo = std::max(0, r - i), hi = std::min<int>(k.size(), h + r - i);
      for (int j = 0; j < w; ++j) {
        double acc = 0.0;
        for (int t = lo; t < hi; ++t) acc += k[t] * tmp[(i + t - r) * w + j];
        dst[i * w + j] += acc;
      }
    }
  }
}

}  // namespace

Tensor gaussian_blur(Tape& tape, const Tensor& x, int window, double sigma) {
  const auto [n, c, h, w] = dims4(x, "gaussian_blur");
  require(window > 0 && window % 2 == 1 && sigma > 0.0, "gaussian_blur: bad window");
  auto k = gaussian_kernel(window, sigma);
  Tensor out = make_result(x.shape());
  blur_planes(x.values().data(), out.mutable_values().data(), n * c, h, w, k);
  check_finite(out, "gaussian_blur");
  if (tape.wants({&x})) {
    tape.record("gaussian_blur", out, [xn = x.node(), on = out.node(), k, planes = n * c, h, w] {
      if (double* g = sink(xn)) blur_planes(on->grad.data(), g, planes, h, w, k);
    });
  }
  return out;
}

namespace {

// (j + 0.5) / w * w - 0.5 can miss j by an ulp; landing exactly on the
// texel centre makes such samples return the texel value unchanged.
double snap_to_texel(double p) {
  const double r = std::nearbyint(p);
  return std::abs(p - r) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(p)) ? r : p;
}

}  // namespace

Tensor grid_sample(Tape& tape, const Tensor& fm, const Tensor& coords) {
  require_rank(fm, 3, "grid_sample");
  require_rank(coords, 2, "grid_sample");
  require(coords.size(1) == 2, "grid_sample: coords must be n x 2");
  const int c = fm.size(0), h = fm.size(1), w = fm.size(2), n = coords.size(0);
  require(h > 0 && w > 0, "grid_sample: empty feature map");

  struct Tap {
    int x0, x1, y0, y1;
    double fx, fy;
    bool free_x, free_y;
  };
  std::vector<Tap> taps(n);
  for (int i = 0; i < n; ++i) {
    const double px = snap_to_texel(coords[2 * i] * w - 0.5);
    const double py = snap_to_texel(coords[2 * i + 1] * h - 0.5);
    const double cx = std::clamp(px, 0.0, static_cast<double>(w - 1));
    const double cy = std::clamp(py, 0.0, static_cast<double>(h - 1));
    Tap t;
    t.x0 = std::min(static_cast<int>(std::floor(cx)), w - 1);
    t.y0 = std::min(static_cast<int>(std::floor(cy)), h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.fx = cx - t.x0;
    t.fy = cy - t.y0;
    t.free_x = px >= 0.0 && px <= w - 1 && w > 1;
    t.free_y = py >= 0.0 && py <= h - 1 && h > 1;
    taps[i] = t;
  }

  Tensor out = make_result(Shape{n, c});
  auto o = out.mutable_values();
  const int hw = h * w;
  for (int i = 0; i < n; ++i) {
    const Tap& t = taps[i];
    for (int ch = 0; ch < c; ++ch) {
      const double* f = fm.values().data() + ch * hw;
      o[i * c + ch] = (1 - t.fx) * (1 - t.fy) * f[t.y0 * w + t.x0] + t.fx * (1 - t.fy) * f[t.y0 * w + t.x1] +
                      (1 - t.fx) * t.fy * f[t.y1 * w + t.x0] + t.fx * t.fy * f[t.y1 * w + t.x1];
    }
  }
  check_finite(out, "grid_sample");
  if (tape.wants({&fm, &coords})) {
    tape.record("grid_sample", out, [fn = fm.node(), cn = coords.node(), on = out.node(),
                                     taps = std::move(taps), c, h, w, n] {
      double* gf = sink(fn);
      double* gc = sink(cn);
      const int hw = h * w;
      for (int i = 0; i < n; ++i) {
        const Tap& t = taps[i];
        double du = 0.0, dv = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const double go = on->grad[i * c + ch];
          if (gf) {
            double* g = gf + ch * hw;
            g[t.y0 * w + t.x0] += go * (1 - t.fx) * (1 - t.fy);
            g[t.y0 * w + t.x1] += go * t.fx * (1 - t.fy);
            g[t.y1 * w + t.x0] += go * (1 - t.fx) * t.fy;
            g[t.y1 * w + t.x1] += go * t.fx * t.fy;
          }
          if (gc) {
            const double* f = fn->value.data() + ch * hw;
            const double f00 = f[t.y0 * w + t.x0], f01 = f[t.y0 * w + t.x1];
            const double f10 = f[t.y1 * w + t.x0], f11 = f[t.y1 * w + t.x1];
            du += go * ((1 - t.fy) * (f01 - f00) + t.fy * (f11 - f10));
            dv += go * ((1 - t.fx) * (f10 - f00) + t.fx * (f11 - f01));
          }
        }
        if (gc) {
          if (t.free_x) gc[2 * i] += du * w;
          if (t.free_y) gc[2 * i + 1] += dv * h;
        }
      }
    });
  }
  return out;
}

}  // namespace wildgs::ad
