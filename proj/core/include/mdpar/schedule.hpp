#pragma once

#include <cmath>
#include <cstdint>

#include "mdpar/errors.hpp"

namespace mdpar {

// Per-step learning-rate schedule: linear warmup to base_lr over the warmup
// epochs, then cosine decay to zero at the final step.
struct LrSchedule {
  double base_lr = 8e-3;
  std::int64_t warmup_epochs = 5;
  std::int64_t total_epochs = 60;
  std::int64_t steps_per_epoch = 1;

  std::int64_t warmup_steps() const { return warmup_epochs * steps_per_epoch; }
  std::int64_t total_steps() const { return total_epochs * steps_per_epoch; }
};

inline double scheduled_lr(const LrSchedule& s, std::int64_t step) {
  if (s.steps_per_epoch < 1 || s.total_epochs < 1) {
    throw ConfigError("lr schedule: steps_per_epoch and total_epochs must be "
                      "positive");
  }
  const std::int64_t warm = s.warmup_steps();
  const std::int64_t total = s.total_steps();
  if (step < warm) {
    return s.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warm);
  }
  if (total <= warm) return s.base_lr;  // schedule is all warmup
  double progress = static_cast<double>(step + 1 - warm) /
                    static_cast<double>(total - warm);
  progress = std::min(progress, 1.0);
  constexpr double pi = 3.14159265358979323846;
  return s.base_lr * 0.5 * (1.0 + std::cos(pi * progress));
}

}  // namespace mdpar
