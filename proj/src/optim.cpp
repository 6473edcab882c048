#include "clusmfl/optim.hpp"

#include <cmath>
#include <numbers>

#include "clusmfl/errors.hpp"

namespace clusmfl {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state lengths differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double cosine_lr(const CosineSchedule& schedule, std::size_t step) {
  if (schedule.total_steps == 0 || step >= schedule.total_steps) {
    return step == 0 && schedule.total_steps == 0 ? schedule.base_lr : schedule.min_lr;
  }
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.min_lr +
         0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace clusmfl
