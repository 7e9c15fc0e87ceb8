#pragma once

#include "atrl/mat.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace atrl {

// Quadrature nodes and weights on an interval. Weights must be positive and
// sum to the interval length; points strictly increasing.
struct QuadratureGrid {
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  double length() const;
  void validate() const;
};

// Composite midpoint rule on [lo, hi] with n uniform cells.
QuadratureGrid midpoint_grid(std::size_t n, double lo = 0.0, double hi = 1.0);

// Discrete factorization G(u,v) = sum_k sigma_k phi_k(u) psi_k(v) where the
// phi_k (columns of `left`) and psi_k (columns of `right`) are orthonormal in
// the weighted inner product <f,g> = sum_i w_i f(p_i) g(p_i).
struct SpectralFactorization {
  std::vector<double> sigma;
  Mat left;
  Mat right;
  QuadratureGrid grid;

  std::size_t rank() const { return sigma.size(); }
  // Value of the rank-r truncated expansion at grid indices (i, j).
  double reconstruct(std::size_t i, std::size_t j, std::size_t r) const;
};

// Proper orthogonal decomposition of a bivariate function sampled on
// grid x grid: SVD of the weight-scaled sample matrix W^{1/2} G W^{1/2},
// singular vectors unscaled back to function samples.
SpectralFactorization pod(const std::function<double(double, double)>& G,
                          const QuadratureGrid& grid);

// sqrt(sum_{k > r} sigma_k^2): the weighted L2 error of the best rank-r
// truncation (Eckart-Young tail).
double truncation_error(const std::vector<double>& sigma, std::size_t r);
double truncation_error(const SpectralFactorization& fact, std::size_t r);

// Fit sigma_k ~ c k^{-alpha}: alpha from the least-squares slope of
// log sigma_k vs log k over the nonzero entries, then c chosen as
// max_k sigma_k k^alpha so the bound holds exactly on the data.
// Returns (c, alpha). Requires at least 3 nonzero values.
std::pair<double, double> fit_decay_exponent(const std::vector<double>& sigma);

// "ATRL" envelope, section "SPEC".
void save_spectral(std::ostream& os, const SpectralFactorization& fact);
SpectralFactorization load_spectral(std::istream& is);
void save_spectral_file(const std::string& path, const SpectralFactorization& fact);
SpectralFactorization load_spectral_file(const std::string& path);

}  // namespace atrl
