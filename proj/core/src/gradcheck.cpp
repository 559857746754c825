#include "dkph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dkph/errors.hpp"

namespace dkph {

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<Matrix* const> params,
                                  std::span<const Matrix* const> analytic,
                                  double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff_check: step must be positive");
  if (params.size() != analytic.size()) {
    throw ShapeError("finite_diff_check: params and gradients differ in count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*analytic[i])) {
      throw ShapeError("finite_diff_check: gradient shape mismatch at param " +
                       std::to_string(i));
    }
  }
  const double base = loss();
  if (loss() != base) throw DeterminismError("loss function is not deterministic");

  GradCheckReport report;
  std::size_t flat = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p]->values();
    auto grads = analytic[p]->values();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss();
      values[i] = saved - step;
      const double down = loss();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error || report.param_count == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_index = flat;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.param_count;
    }
  }
  return report;
}

}  // namespace dkph
