#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dkph/numerics.hpp"

namespace dkph {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer. Moment buffers are allocated on the first
/// step and keyed by position, so callers must pass parameters in a fixed
/// order.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads);

  std::size_t steps_taken() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace dkph
