#include "wildgs/adam.hpp"

#include <cmath>

#include "wildgs/errors.hpp"

namespace wildgs {

void adam_step(std::vector<ParamGroup>& groups, OptimizerState& state) {
  if (state.groups.size() < groups.size()) state.groups.resize(groups.size());
  const AdamConfig& cfg = state.config;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ParamGroup& group = groups[g];
    GroupState& gs = state.groups[g];
    if (gs.moments.size() < group.params.size()) gs.moments.resize(group.params.size());

    bool finite = true;
    for (const ad::Tensor& p : group.params)
      for (double x : p.grad())
        if (!std::isfinite(x)) finite = false;
    if (!finite) {
      ++state.faults;
      continue;
    }

    ++gs.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(gs.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(gs.step));
    for (std::size_t k = 0; k < group.params.size(); ++k) {
      ad::Tensor& p = group.params[k];
      const auto grad = p.grad();
      if (grad.empty()) continue;
      Moments& mo = gs.moments[k];
      if (mo.m.empty() && mo.v.empty()) {
        mo.m.assign(p.numel(), 0.0);
        mo.v.assign(p.numel(), 0.0);
      }
      if (mo.m.size() != p.numel() || mo.v.size() != p.numel()) {
        throw ContractViolation("adam: moment shape does not match parameter in group " + group.name);
      }
      auto value = p.mutable_values();
      for (std::size_t i = 0; i < value.size(); ++i) {
        mo.m[i] = cfg.beta1 * mo.m[i] + (1.0 - cfg.beta1) * grad[i];
        mo.v[i] = cfg.beta2 * mo.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = mo.m[i] / c1;
        const double v_hat = mo.v[i] / c2;
        value[i] -= group.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
  }
}

void gather_moment_rows(Moments& moments, int row_width, const std::vector<int>& source,
                        const std::vector<std::uint8_t>& fresh) {
  if (moments.m.empty()) return;
  if (source.size() != fresh.size()) throw ContractViolation("gather_moment_rows: source/fresh lengths differ");
  Moments out;
  out.m.assign(source.size() * row_width, 0.0);
  out.v.assign(source.size() * row_width, 0.0);
  const std::size_t rows = moments.m.size() / row_width;
  for (std::size_t r = 0; r < source.size(); ++r) {
    if (fresh[r]) continue;
    if (source[r] < 0 || static_cast<std::size_t>(source[r]) >= rows) {
      throw ContractViolation("gather_moment_rows: source row out of range");
    }
    for (int c = 0; c < row_width; ++c) {
      out.m[r * row_width + c] = moments.m[source[r] * row_width + c];
      out.v[r * row_width + c] = moments.v[source[r] * row_width + c];
    }
  }
  moments = std::move(out);
}

}  // namespace wildgs
