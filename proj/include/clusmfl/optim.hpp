#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace clusmfl {

// Adam moments over a flat parameter vector (see flatten() in mlp.hpp).
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// One bias-corrected Adam update in place. Throws NumericError on a
// non-finite gradient and ShapeError on length mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

struct CosineSchedule {
  double base_lr = 0.01;
  std::size_t total_steps = 1;
  double min_lr = 0.0;
};

// min + (base - min) * (1 + cos(pi * step / total)) / 2; steps past the end
// return min_lr.
double cosine_lr(const CosineSchedule& schedule, std::size_t step);

}  // namespace clusmfl
