#pragma once

// Test-only helpers. Everything here is deliberately independent of the tape
// implementation: finite differences and brute-force references only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cten/rng.hpp"
#include "cten/tensor.hpp"

namespace oracles {

/// Central finite-difference gradient of a scalar function w.r.t. every
/// element of inputs[which].
inline cten::Tensor finite_difference(
    const std::function<double(const std::vector<cten::Tensor>&)>& f,
    std::vector<cten::Tensor> inputs, std::size_t which, double step = 1e-6) {
  cten::Tensor g(inputs[which].shape());
  for (std::size_t i = 0; i < inputs[which].size(); ++i) {
    const double orig = inputs[which][i];
    inputs[which][i] = orig + step;
    const double fp = f(inputs);
    inputs[which][i] = orig - step;
    const double fm = f(inputs);
    inputs[which][i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

inline double max_rel_err(const cten::Tensor& a, const cten::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

inline double max_abs_diff(const cten::Tensor& a, const cten::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline cten::Tensor random_tensor(cten::Shape shape, cten::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
  cten::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracles
