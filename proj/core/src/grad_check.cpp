#include "wildgs/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "wildgs/errors.hpp"

namespace wildgs::ad {

namespace {

double evaluate(const std::function<Tensor(Tape&)>& f) {
  Tape tape(false);
  const double v = f(tape).item();
  if (!std::isfinite(v)) throw NumericFault("grad_check: non-finite function value at probe");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> params,
                           double epsilon, double floor) {
  if (!(epsilon > 0.0)) throw ContractViolation("grad_check: epsilon must be positive");
  if (!(floor > 0.0)) throw ContractViolation("grad_check: floor must be positive");
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    if (!std::isfinite(loss.item())) throw NumericFault("grad_check: non-finite function value");
    tape.backward(loss);
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double up = evaluate(f);
      vals[i] = saved - epsilon;
      const double down = evaluate(f);
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > result.max_relative_error) {
        result = {err, pi, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace wildgs::ad
