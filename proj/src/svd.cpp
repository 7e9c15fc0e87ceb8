#include "atrl/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace atrl {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagTol = 1e-14;

double col_dot(const Mat& A, std::size_t p, std::size_t q) {
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i) s += A(i, p) * A(i, q);
  return s;
}

// Fill column j of U with a unit vector orthogonal to every other column;
// used when a singular value is numerically zero. Candidates are the standard
// basis vectors, tried from *cand_hint onward: once a candidate fails (ends up
// inside the span of existing columns) it fails for every later completion
// too, since the span only grows, so the scan never needs to back up.
void complete_column(Mat& U, std::size_t j, std::size_t* cand_hint) {
  const std::size_t m = U.rows;
  auto residual_norm = [&](std::size_t cand) {
    for (std::size_t i = 0; i < m; ++i) U(i, j) = (i == cand) ? 1.0 : 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < U.cols; ++k) {
        if (k == j) continue;
        const double d = col_dot(U, j, k);
        for (std::size_t i = 0; i < m; ++i) U(i, j) -= d * U(i, k);
      }
    }
    return std::sqrt(col_dot(U, j, j));
  };
  std::size_t best = m;
  double best_nrm = 0.0;
  for (std::size_t cand = *cand_hint; cand < m; ++cand) {
    const double nrm = residual_norm(cand);
    if (nrm > 0.5) {
      for (std::size_t i = 0; i < m; ++i) U(i, j) /= nrm;
      *cand_hint = cand + 1;
      return;
    }
    if (nrm > best_nrm) {
      best_nrm = nrm;
      best = cand;
    }
  }
  // no candidate clears the fast gate; settle for the largest residual
  if (best < m && best_nrm > 1e-8) {
    const double nrm = residual_norm(best);
    for (std::size_t i = 0; i < m; ++i) U(i, j) /= nrm;
    *cand_hint = m;
    return;
  }
  throw std::runtime_error("svd: failed to complete orthonormal basis");
}

}  // namespace

SvdResult svd(const Mat& M) {
  if (M.rows == 0 || M.cols == 0) throw std::invalid_argument("svd: empty matrix");
  for (double v : M.a)
    if (!std::isfinite(v)) throw std::invalid_argument("svd: non-finite input");

  // Work tall: for wide matrices factor the transpose and swap factors.
  if (M.rows < M.cols) {
    SvdResult r = svd(transpose(M));
    return {std::move(r.V), std::move(r.S), std::move(r.U)};
  }

  const std::size_t m = M.rows, n = M.cols;
  Mat A = M;
  Mat V(n, n);
  for (std::size_t i = 0; i < n; ++i) V(i, i) = 1.0;

  // Columns whose norm collapses below this are numerically zero directions:
  // rotating them forever against roundoff noise would stall convergence, so
  // they are frozen and later replaced by an orthonormal completion.
  double max_sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) max_sq = std::max(max_sq, col_dot(A, j, j));
  const double eps = 2.220446049250313e-16;
  const double floor_sq = max_sq * (eps * eps * static_cast<double>(m));

  double max_rel = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    max_rel = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double app = col_dot(A, p, p);
        const double aqq = col_dot(A, q, q);
        if (app <= floor_sq || aqq <= floor_sq) continue;
        const double apq = col_dot(A, p, q);
        const double denom = std::sqrt(app * aqq);
        if (apq == 0.0) continue;
        const double rel = std::fabs(apq) / denom;
        max_rel = std::max(max_rel, rel);
        if (rel <= kOffDiagTol) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = A(i, p), aq = A(i, q);
          A(i, p) = c * ap - s * aq;
          A(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = V(i, p), vq = V(i, q);
          V(i, p) = c * vp - s * vq;
          V(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw std::runtime_error("svd: no convergence after " + std::to_string(kMaxSweeps) +
                             " Jacobi sweeps, max off-diagonal " + std::to_string(max_rel));

  std::vector<double> sig(n);
  const double floor_norm = std::sqrt(floor_sq);
  for (std::size_t j = 0; j < n; ++j) sig[j] = std::sqrt(col_dot(A, j, j));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

  SvdResult out;
  out.S.resize(n);
  out.U = Mat(m, n);
  out.V = Mat(n, n);
  std::vector<std::size_t> zero_cols;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.S[j] = sig[src];
    for (std::size_t i = 0; i < n; ++i) out.V(i, j) = V(i, src);
    if (sig[src] > floor_norm) {
      for (std::size_t i = 0; i < m; ++i) out.U(i, j) = A(i, src) / sig[src];
    } else {
      zero_cols.push_back(j);  // noise direction; norm is reported but the
                               // left vector comes from basis completion
    }
  }
  std::size_t cand_hint = 0;
  for (std::size_t j : zero_cols) complete_column(out.U, j, &cand_hint);
  return out;
}

}  // namespace atrl
