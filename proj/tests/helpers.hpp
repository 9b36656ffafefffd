#pragma once

#include <cmath>
#include <vector>

#include "unibci/rng.hpp"
#include "unibci/tensor.hpp"

namespace testutil {

template <typename S>
unibci::Tensor<S> rand_tensor(unibci::Shape shape, unibci::Rng& rng, double scale = 1.0) {
  unibci::Tensor<S> t(shape);
  for (unibci::Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.normal() * scale);
  return t;
}

template <typename S>
double max_abs_diff(const unibci::Tensor<S>& a, const unibci::Tensor<S>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (unibci::Index i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace testutil
