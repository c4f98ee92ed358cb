#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace ulab::train {

// Cosine decay from lr0 down to floor_factor * lr0. Monotone non-increasing;
// step is clamped into [0, total_steps].
inline double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0,
                        double floor_factor) {
  if (total_steps <= 0) return lr0;
  const double s = static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps));
  const double f = floor_factor;
  const double cos_part = (1.0 + std::cos(M_PI * s / static_cast<double>(total_steps))) / 2.0;
  return lr0 * (f + (1.0 - f) * cos_part);
}

}  // namespace ulab::train
