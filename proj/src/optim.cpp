#include "crossdiff/optim.hpp"

#include <cmath>

#include "crossdiff/errors.hpp"

namespace crossdiff {

void adam_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ValidationError("adam_step: " + std::to_string(params.size()) + " params but " +
                          std::to_string(grads.size()) + " gradients");
  }
  for (size_t k = 0; k < params.size(); ++k) {
    if (params[k].data.size() != grads[k].data.size()) {
      throw ValidationError("adam_step: shape mismatch for " + params[k].name);
    }
  }
  if (!state.shaped()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.data.size(), 0.0);
      state.second_moment.emplace_back(p.data.size(), 0.0);
    }
  } else if (state.first_moment.size() != params.size()) {
    throw ValidationError("adam_step: optimizer state does not match parameter list");
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data;
    auto g = grads[k].data;
    Vec& m = state.first_moment[k];
    Vec& v = state.second_moment[k];
    if (m.size() != p.size()) throw ValidationError("adam_step: moment shape mismatch");
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace crossdiff
