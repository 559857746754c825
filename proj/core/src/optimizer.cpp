#include "dkph/optimizer.hpp"

#include <cmath>

#include "dkph/errors.hpp"

namespace dkph {

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: param/grad count mismatch");
  if (first_.empty()) {
    for (const Matrix* p : params) {
      first_.push_back(Matrix::zeros_like(*p));
      second_.push_back(Matrix::zeros_like(*p));
    }
  }
  if (first_.size() != params.size()) throw ShapeError("Adam: parameter list changed");

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p]->values();
    auto g = grads[p]->values();
    auto m = first_[p].values();
    auto v = second_[p].values();
    if (w.size() != g.size() || w.size() != m.size()) {
      throw ShapeError("Adam: shape mismatch at param " + std::to_string(p));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace dkph
