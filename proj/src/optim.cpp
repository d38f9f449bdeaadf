#include "buildiff/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace buildiff {

void adam_step(AdamState& state, std::span<ad::Parameter* const> params) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  for (const auto* p : params) {
    if (!p->has_grad || p->grad.size() != p->value.size())
      throw std::invalid_argument("adam_step: parameter '" + p->name + "' has no gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p->value.size())
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + p->name + "'");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p->value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    p->has_grad = false;
  }
}

}  // namespace buildiff
