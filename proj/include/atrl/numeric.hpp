#pragma once

// Shared scalar kernels. The softmax here is the single implementation used
// by both the model forward pass and the target-function oracle, so the two
// sides cannot drift numerically.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace atrl {

// Shift-invariant softmax over len strided entries, in and out may alias.
inline void softmax_strided(const double* in, double* out, std::size_t len, std::size_t stride) {
  double mx = in[0];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, in[i * stride]);
  double denom = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double e = std::exp(in[i * stride] - mx);
    out[i * stride] = e;
    denom += e;
  }
  for (std::size_t i = 0; i < len; ++i) out[i * stride] /= denom;
}

}  // namespace atrl
