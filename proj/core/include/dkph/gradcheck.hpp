#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "dkph/numerics.hpp"

namespace dkph {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t param_count = 0;
  /// Flat index of the worst entry across all checked matrices, in order.
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference check of `analytic` against `loss`, perturbing each
/// entry of `params` in place by ±step and restoring it afterwards.
/// Relative error per entry is |a−n| / max(|a|, |n|, 1e-8).
///
/// Throws DeterminismError when two calls at the unperturbed point disagree.
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<Matrix* const> params,
                                  std::span<const Matrix* const> analytic,
                                  double step);

}  // namespace dkph
