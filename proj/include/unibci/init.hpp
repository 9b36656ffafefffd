#pragma once

#include "unibci/rng.hpp"
#include "unibci/tensor.hpp"

namespace unibci {

template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double stddev) {
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.normal() * stddev);
}

}  // namespace unibci
