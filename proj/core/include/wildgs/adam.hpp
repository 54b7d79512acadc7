#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wildgs/tensor.hpp"

namespace wildgs {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ParamGroup {
  std::string name;
  std::vector<ad::Tensor> params;
  double lr = 1e-3;
};

struct Moments {
  std::vector<double> m, v;
};

struct GroupState {
  std::vector<Moments> moments;  // one per parameter of the group
  std::int64_t step = 0;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<GroupState> groups;
  std::int64_t faults = 0;  // groups skipped for non-finite gradients
};

/// Bias-corrected Adam over every group. A group whose gradients contain a
/// NaN/Inf is left untouched and counted in state.faults. Parameters with
/// no gradient buffer are skipped. State is created lazily.
void adam_step(std::vector<ParamGroup>& groups, OptimizerState& state);

/// Reorders the moments of a row-major parameter with `row_width` values
/// per row: output row r takes input row source[r], zeroed where fresh[r].
void gather_moment_rows(Moments& moments, int row_width, const std::vector<int>& source,
                        const std::vector<std::uint8_t>& fresh);

}  // namespace wildgs
