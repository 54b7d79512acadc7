#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "support/testutil.hpp"
#include "wildgs/errors.hpp"
#include "wildgs/grad_check.hpp"
#include "wildgs/ops.hpp"

using namespace wildgs;
using namespace wildgs::ad;
using testutil::random_tensor;
using testutil::weighted_sum;

namespace {

// Values bounded away from zero so relu/abs kinks stay outside the FD stencil.
Tensor signed_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (double& v : t.mutable_values())
    if (coin(rng)) v = -v;
  return t;
}

struct PrimitiveCase {
  const char* name;
  std::function<std::pair<std::function<Tensor(Tape&)>, std::vector<Tensor>>(std::mt19937_64&)> make;
};

using Fn = std::function<Tensor(Tape&)>;
using Made = std::pair<Fn, std::vector<Tensor>>;

Made unary(std::mt19937_64& rng, Tensor (*op)(Tape&, const Tensor&), bool positive = false) {
  Tensor x = positive ? random_tensor({3, 4}, rng, 0.2, 1.5) : signed_tensor({3, 4}, rng);
  return {[=](Tape& t) { return weighted_sum(t, op(t, x)); }, {x}};
}

Made binary(std::mt19937_64& rng, Tensor (*op)(Tape&, const Tensor&, const Tensor&), bool positive_b = false) {
  Tensor a = signed_tensor({2, 5}, rng);
  Tensor b = positive_b ? random_tensor({2, 5}, rng, 0.5, 1.5) : signed_tensor({2, 5}, rng);
  return {[=](Tape& t) { return weighted_sum(t, op(t, a, b)); }, {a, b}};
}

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> cases;
  cases.push_back({"add", [](auto& rng) { return binary(rng, add); }});
  cases.push_back({"sub", [](auto& rng) { return binary(rng, sub); }});
  cases.push_back({"mul", [](auto& rng) { return binary(rng, mul); }});
  cases.push_back({"div", [](auto& rng) { return binary(rng, div, true); }});
  cases.push_back({"relu", [](auto& rng) { return unary(rng, relu); }});
  cases.push_back({"sigmoid", [](auto& rng) { return unary(rng, sigmoid); }});
  cases.push_back({"square", [](auto& rng) { return unary(rng, square); }});
  cases.push_back({"abs", [](auto& rng) { return unary(rng, ad::abs); }});
  cases.push_back({"scale", [](auto& rng) {
                     Tensor x = signed_tensor({4}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, scale(t, x, -1.7)); }, {x}};
                   }});
  cases.push_back({"add_scalar", [](auto& rng) {
                     Tensor x = signed_tensor({4}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, square(t, add_scalar(t, x, 0.3))); }, {x}};
                   }});
  cases.push_back({"scale_by", [](auto& rng) {
                     Tensor x = signed_tensor({2, 3}, rng);
                     Tensor s = signed_tensor({1}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, scale_by(t, x, s)); }, {x, s}};
                   }});
  cases.push_back({"mean", [](auto& rng) {
                     Tensor x = signed_tensor({3, 3}, rng);
                     return Made{[=](Tape& t) { return square(t, mean(t, x)); }, {x}};
                   }});
  cases.push_back({"reshape", [](auto& rng) {
                     Tensor x = signed_tensor({2, 6}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, reshape(t, x, {3, 4})); }, {x}};
                   }});
  cases.push_back({"matmul", [](auto& rng) {
                     Tensor a = signed_tensor({3, 4}, rng);
                     Tensor b = signed_tensor({4, 2}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, matmul(t, a, b)); }, {a, b}};
                   }});
  cases.push_back({"linear", [](auto& rng) {
                     Tensor x = signed_tensor({3, 4}, rng);
                     Tensor w = signed_tensor({2, 4}, rng);
                     Tensor b = signed_tensor({2}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, linear(t, x, w, b)); }, {x, w, b}};
                   }});
  cases.push_back({"concat_cols", [](auto& rng) {
                     Tensor a = signed_tensor({3, 2}, rng);
                     Tensor b = signed_tensor({3, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, concat_cols(t, a, b)); }, {a, b}};
                   }});
  cases.push_back({"select_cols", [](auto& rng) {
                     Tensor x = signed_tensor({3, 4}, rng);
                     return Made{[=](Tape& t) {
                                   const int cols[] = {2, 0, 2};
                                   return weighted_sum(t, select_cols(t, x, cols));
                                 },
                                 {x}};
                   }});
  cases.push_back({"affine_cols", [](auto& rng) {
                     Tensor x = signed_tensor({4, 2}, rng);
                     return Made{[=](Tape& t) {
                                   const double off[] = {0.3, -0.2};
                                   const double inv[] = {2.0, 0.5};
                                   return weighted_sum(t, affine_cols(t, x, off, inv));
                                 },
                                 {x}};
                   }});
  cases.push_back({"broadcast_rows", [](auto& rng) {
                     Tensor v = signed_tensor({3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, broadcast_rows(t, v, 4)); }, {v}};
                   }});
  cases.push_back({"where_rows", [](auto& rng) {
                     Tensor a = signed_tensor({4, 3}, rng);
                     Tensor v = signed_tensor({3}, rng);
                     return Made{[=](Tape& t) {
                                   const std::uint8_t take[] = {1, 0, 1, 0};
                                   return weighted_sum(t, where_rows(t, take, a, v));
                                 },
                                 {a, v}};
                   }});
  for (int stride : {1, 2}) {
    cases.push_back({stride == 1 ? "conv2d stride 1" : "conv2d stride 2", [stride](auto& rng) {
                       Tensor x = signed_tensor({2, 2, 5, 6}, rng);
                       Tensor w = signed_tensor({3, 2, 3, 3}, rng);
                       Tensor b = signed_tensor({3}, rng);
                       return Made{[=](Tape& t) { return weighted_sum(t, conv2d(t, x, w, b, stride, 1)); },
                                   {x, w, b}};
                     }});
  }
  cases.push_back({"upsample2x", [](auto& rng) {
                     Tensor x = signed_tensor({1, 2, 2, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, upsample2x(t, x)); }, {x}};
                   }});
  cases.push_back({"avg_pool2x2", [](auto& rng) {
                     Tensor x = signed_tensor({1, 2, 4, 4}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, avg_pool2x2(t, x)); }, {x}};
                   }});
  cases.push_back({"global_avg_pool", [](auto& rng) {
                     Tensor x = signed_tensor({2, 3, 3, 2}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, global_avg_pool(t, x)); }, {x}};
                   }});
  cases.push_back({"concat_channels", [](auto& rng) {
                     Tensor a = signed_tensor({2, 1, 3, 3}, rng);
                     Tensor b = signed_tensor({2, 2, 3, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, concat_channels(t, a, b)); }, {a, b}};
                   }});
  cases.push_back({"slice_channels", [](auto& rng) {
                     Tensor x = signed_tensor({2, 4, 2, 2}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, slice_channels(t, x, 1, 3)); }, {x}};
                   }});
  cases.push_back({"select_batch", [](auto& rng) {
                     Tensor x = signed_tensor({3, 2, 2, 2}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, select_batch(t, x, 1)); }, {x}};
                   }});
  cases.push_back({"mul_channels", [](auto& rng) {
                     Tensor x = signed_tensor({2, 3, 2, 3}, rng);
                     Tensor m = signed_tensor({2, 1, 2, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, mul_channels(t, x, m)); }, {x, m}};
                   }});
  cases.push_back({"channel_mean", [](auto& rng) {
                     Tensor x = signed_tensor({2, 2, 3, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, channel_mean(t, x)); }, {x}};
                   }});
  cases.push_back({"channel_var", [](auto& rng) {
                     Tensor x = signed_tensor({2, 2, 3, 3}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, channel_var(t, x)); }, {x}};
                   }});
  cases.push_back({"gaussian_blur", [](auto& rng) {
                     Tensor x = signed_tensor({1, 2, 6, 5}, rng);
                     return Made{[=](Tape& t) { return weighted_sum(t, gaussian_blur(t, x, 5, 1.2)); }, {x}};
                   }});
  cases.push_back({"grid_sample", [](auto& rng) {
                     Tensor f = signed_tensor({2, 4, 5}, rng);
                     // Strictly inside the texel-centre hull, away from clamping.
                     Tensor uv = random_tensor({6, 2}, rng, 0.15, 0.85);
                     return Made{[=](Tape& t) { return weighted_sum(t, grid_sample(t, f, uv)); }, {f, uv}};
                   }});
  return cases;
}

}  // namespace

TEST_CASE("grad_check of a plain sum is exact") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({5, 3}, rng);
  const auto r = grad_check([&](Tape& t) { return sum(t, x); }, {x}, 1e-6);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("every primitive matches central differences over 100 seeds") {
  for (const PrimitiveCase& c : primitive_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed * 7919 + 13);
      auto [f, params] = c.make(rng);
      // Weights and inputs are O(1), so gradients below 1e-3 are cancellation.
      // grid_sample is piecewise bilinear; a small step keeps probes inside one cell.
      const double eps = std::string(c.name) == "grid_sample" ? 1e-6 : 1e-4;
      worst = std::max(worst, grad_check(f, params, eps, 1e-3).max_relative_error);
    }
    INFO(std::string(c.name));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("a corrupted backward rule is detected") {
  std::mt19937_64 rng(3);
  Tensor x = signed_tensor({4}, rng);
  auto broken_square = [](Tape& tape, const Tensor& in) {
    Tensor out = make_result(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out.mutable_values()[i] = in[i] * in[i];
    if (tape.wants({&in})) {
      tape.record("broken_square", out, [x = in, out]() mutable {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * x[i] * out.grad()[i];  // should be 2x
      });
    }
    return out;
  };
  const auto r = grad_check([&](Tape& t) { return sum(t, broken_square(t, x)); }, {x}, 1e-6);
  CHECK(r.max_relative_error > 1e-2);
}

TEST_CASE("two backward passes double leaf gradients exactly") {
  std::mt19937_64 rng(5);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor x = random_tensor({2, 4}, rng, -1, 1, false);
  Tensor b = random_tensor({3}, rng);
  auto loss = [&](Tape& t) { return sum(t, sigmoid(t, linear(t, x, w, b))); };
  {
    Tape t;
    t.backward(loss(t));
  }
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  {
    Tape t;
    t.backward(loss(t));
  }
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("gradient of a weighted sum of two losses is the weighted sum of gradients") {
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({6}, rng);
  auto f = [&](Tape& t) { return sum(t, square(t, x)); };
  auto g = [&](Tape& t) { return sum(t, sigmoid(t, x)); };
  auto grad_of = [&](const std::function<Tensor(Tape&)>& h) {
    x.zero_grad();
    Tape t;
    t.backward(h(t));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const double a = 1.5, b = -0.75;
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto gc = grad_of([&](Tape& t) { return add(t, scale(t, f(t), a), scale(t, g(t), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-14));
}

TEST_CASE("grid_sample returns texel values at texel centres") {
  std::mt19937_64 rng(11);
  const int C = 3, H = 4, W = 5;
  Tensor f = random_tensor({C, H, W}, rng, -1, 1, false);
  std::vector<double> uv;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      uv.push_back((j + 0.5) / W);
      uv.push_back((i + 0.5) / H);
    }
  Tape tape(false);
  Tensor out = grid_sample(tape, f, Tensor({H * W, 2}, uv));
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < C; ++c) CHECK(out[(i * W + j) * C + c] == f[(c * H + i) * W + j]);
}

TEST_CASE("grid_sample is linear between neighbouring texel centres") {
  std::mt19937_64 rng(12);
  const int H = 4, W = 4;
  Tensor f = random_tensor({1, H, W}, rng, -1, 1, false);
  Tape tape(false);
  const double v = 1.5 / H;  // row 1 centre
  for (double s : {0.0, 0.2, 0.5, 0.9}) {
    const double u = (1.5 + s) / W;
    Tensor out = grid_sample(tape, f, Tensor({1, 2}, {u, v}));
    const double expect = (1 - s) * f[1 * W + 1] + s * f[1 * W + 2];
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-14));
  }
  const double u = 2.5 / W;  // column 2 centre, sweep rows 2..3
  for (double s : {0.1, 0.4, 0.75}) {
    Tensor out = grid_sample(tape, f, Tensor({1, 2}, {u, (2.5 + s) / H}));
    const double expect = (1 - s) * f[2 * W + 2] + s * f[3 * W + 2];
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("grid_sample clamps to the border and zeroes the clamped coordinate gradient") {
  Tensor f({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor uv({1, 2}, {-0.3, 0.5}, true);
  Tape tape;
  Tensor out = grid_sample(tape, f, uv);
  CHECK(out[0] == doctest::Approx(2.0));  // halfway between rows 0 and 1 on column 0
  tape.backward(sum(tape, out));
  CHECK(uv.grad()[0] == 0.0);
  CHECK(uv.grad()[1] != 0.0);
}

TEST_CASE("conv2d matches a direct loop oracle") {
  std::mt19937_64 rng(21);
  const int N = 1, C = 2, H = 5, W = 4, O = 2, K = 3, stride = 2, pad = 1;
  Tensor x = random_tensor({N, C, H, W}, rng, -1, 1, false);
  Tensor w = random_tensor({O, C, K, K}, rng, -1, 1, false);
  Tensor b = random_tensor({O}, rng, -1, 1, false);
  Tape tape(false);
  Tensor y = conv2d(tape, x, w, b, stride, pad);
  const int Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  REQUIRE(y.shape() == Shape{N, O, Ho, Wo});
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        double acc = b[o];
        for (int c = 0; c < C; ++c)
          for (int ki = 0; ki < K; ++ki)
            for (int kj = 0; kj < K; ++kj) {
              const int yi = i * stride - pad + ki, xj = j * stride - pad + kj;
              if (yi < 0 || yi >= H || xj < 0 || xj >= W) continue;
              acc += w[((o * C + c) * K + ki) * K + kj] * x[(c * H + yi) * W + xj];
            }
        CHECK(y[(o * Ho + i) * Wo + j] == doctest::Approx(acc).epsilon(1e-13));
      }
}

TEST_CASE("ops reject mismatched shapes and report non-finite results") {
  Tape tape;
  CHECK_THROWS_AS(add(tape, Tensor::zeros({2}), Tensor::zeros({3})), ContractViolation);
  CHECK_THROWS_AS(matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ContractViolation);
  CHECK_THROWS_AS(div(tape, Tensor::full({1}, 1.0), Tensor::zeros({1})), NumericFault);
}

TEST_CASE("a disabled tape records nothing") {
  Tape tape(false);
  Tensor x = Tensor::full({3}, 2.0, true);
  Tensor y = square(tape, x);
  CHECK(tape.size() == 0);
  CHECK(y[0] == 4.0);
}
