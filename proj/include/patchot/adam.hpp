#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "patchot/image.hpp"

namespace patchot {

struct AdamParams {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class Real>
struct AdamState {
  std::vector<Real> first_moment;
  std::vector<Real> second_moment;
  std::size_t step_count = 0;

  AdamState() = default;
  explicit AdamState(std::size_t size) : first_moment(size, Real(0)), second_moment(size, Real(0)) {}
};

/// One bias-corrected Adam update: x <- x - lr * m_hat / (sqrt(v_hat) + eps).
template <class Real>
void adam_step(Image<Real>& variable, const Image<Real>& grad, AdamState<Real>& state,
               const AdamParams& params) {
  if (!variable.same_shape(grad)) throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (state.first_moment.empty() && state.second_moment.empty() && state.step_count == 0) {
    state = AdamState<Real>(variable.size());
  }
  if (state.first_moment.size() != variable.size() || state.second_moment.size() != variable.size()) {
    throw std::invalid_argument("adam_step: state shape mismatch");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(params.beta1, t);
  const double bias2 = 1.0 - std::pow(params.beta2, t);
  auto& x = variable.values();
  const auto& g = grad.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double gi = g[i];
    const double m = params.beta1 * state.first_moment[i] + (1.0 - params.beta1) * gi;
    const double v = params.beta2 * state.second_moment[i] + (1.0 - params.beta2) * gi * gi;
    state.first_moment[i] = static_cast<Real>(m);
    state.second_moment[i] = static_cast<Real>(v);
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    x[i] = static_cast<Real>(x[i] - params.lr * m_hat / (std::sqrt(v_hat) + params.eps));
  }
}

}  // namespace patchot
