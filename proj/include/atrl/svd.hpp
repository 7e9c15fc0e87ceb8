#pragma once

#include "atrl/mat.hpp"

#include <vector>

namespace atrl {

// Thin SVD: M (m x n) = U diag(S) V^T with U (m x k), V (n x k), k = min(m,n).
// Columns of U and V are orthonormal; S is nonnegative and decreasing.
struct SvdResult {
  Mat U;
  std::vector<double> S;
  Mat V;
};

// One-sided Jacobi. Deterministic; hard cap of 100 sweeps with off-diagonal
// tolerance 1e-14, after which it throws with the residual in the message.
SvdResult svd(const Mat& M);

}  // namespace atrl
