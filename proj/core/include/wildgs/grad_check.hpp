#pragma once

#include <functional>
#include <vector>

#include "wildgs/tensor.hpp"

namespace wildgs::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;  // index into the params list
  std::size_t worst_index = 0;  // flat coordinate inside that param
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences over every coordinate of `params`. `f` must rebuild its
/// graph on the tape it is handed. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, floor). Raise `floor` towards the typical
/// gradient magnitude when some coordinates cancel to near zero; there the
/// difference quotient carries only roundoff.
GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> params,
                           double epsilon, double floor = 1e-8);

}  // namespace wildgs::ad
