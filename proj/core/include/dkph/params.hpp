#pragma once

#include <string_view>
#include <vector>

#include "dkph/errors.hpp"
#include "dkph/numerics.hpp"

namespace dkph {

/// Every parameter struct exposes `for_each(f)` calling f(name, matrix) in a
/// fixed order. These helpers flatten that order for optimizers and checks.
template <class Params>
std::vector<Matrix*> param_refs(Params& p) {
  std::vector<Matrix*> out;
  p.for_each([&](std::string_view, Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Params>
std::vector<const Matrix*> param_refs(const Params& p) {
  std::vector<const Matrix*> out;
  p.for_each([&](std::string_view, const Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Params>
Params zeros_like(const Params& p) {
  Params out = p;
  out.for_each([](std::string_view, Matrix& m) { m.fill(0.0); });
  return out;
}

/// acc += s·g over matching parameter lists.
template <class Params>
void accumulate(Params& acc, const Params& g, double s = 1.0) {
  auto dst = param_refs(acc);
  auto src = param_refs(g);
  if (dst.size() != src.size()) throw ShapeError("accumulate: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) axpy(*dst[i], *src[i], s);
}

template <class Params>
std::size_t scalar_count(const Params& p) {
  std::size_t n = 0;
  p.for_each([&](std::string_view, const Matrix& m) { n += m.size(); });
  return n;
}

}  // namespace dkph
