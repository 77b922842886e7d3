#pragma once

#include <cmath>
#include <random>
#include <string>

#include "snd/tensor.hpp"

namespace snd::testing {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

/// |a - b| <= max(abs_floor, rel * max(|a|, |b|))
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

/// Largest violation ratio over two equally sized ranges; <= 1 means every entry is close.
template <typename A, typename B>
double worst_ratio(const A& a, const B& b, double rel, double abs_floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    const double tol = std::max(abs_floor, rel * std::max(std::abs(x), std::abs(y)));
    worst = std::max(worst, std::abs(x - y) / tol);
  }
  return worst;
}

}  // namespace snd::testing
