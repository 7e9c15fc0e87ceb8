#pragma once

// Synthetic target relationships: a pooled-attention form
//   H_t(x) = F( sum_s softmax_s[ G(x(t), x(s)) ] * rho(x(s)) )
// with controllable spectra for G, plus the complexity measures reported by
// the experiment drivers.

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "atrl/expr.hpp"
#include "atrl/mat.hpp"
#include "atrl/pod.hpp"
#include "json.hpp"

namespace atrl {

inline constexpr std::size_t kRankInfinite = std::numeric_limits<std::size_t>::max();
// Spectra declared infinite-rank are stored truncated at this many terms; the
// k^-alpha tail beyond it is below experimental noise at the scales used here.
inline constexpr std::size_t kInfiniteRankTerms = 64;

// Analytically evaluable kernel sum_k sigma_k b_k(u) b_k(v) with an
// orthonormal basis identified by name ("cosine": b_k(u) = sqrt(2) cos(k pi u)).
struct SpectralKernel {
  std::vector<double> sigma;
  std::string basis = "cosine";

  double operator()(double u, double v) const;
  double basis_fn(std::size_t k, double u) const;  // k is 1-based
};

struct TargetSpec {
  std::size_t tau = 0;
  std::size_t d = 1;
  Expr F;                 // scalar on [0,1]^{n_rho}, n_rho = rho.size()
  std::vector<Expr> rho;  // each component maps [0,1]^d into [0,1]
  std::variant<SpectralKernel, Expr> G;  // closed-form G has arity 2d: (u, v)

  std::size_t n_rho() const { return rho.size(); }
  bool has_spectral_G() const { return std::holds_alternative<SpectralKernel>(G); }
  // Kernel value at d-dimensional points xu, xv.
  double kernel(const double* xu, const double* xv) const;

  // Structural checks plus sampled range checks (rho into [0,1]).
  void validate() const;

  nlohmann::json to_json() const;
  static TargetSpec from_json(const nlohmann::json& j);
};

struct AttentionGraph {
  Mat matrix;  // tau x tau, rows stochastic
};

struct ComplexityReport {
  double C0 = 0, C1 = 0, alpha = 0, K_F = 0, sup_rho = 0, sup_phi_psi = 0;
  // Number of spectrum terms the sup/max ran over (finite truncation of
  // infinite-rank spectra is flagged by the callers via this count).
  std::size_t spectrum_terms = 0;
};

// sigma_k = k^{-alpha} for k <= r (r = kRankInfinite truncates at
// kInfiniteRankTerms), cosine basis sampled on the grid.
// alpha must exceed 1/2 unless allow_low_alpha is set.
SpectralFactorization make_spectral_G(double alpha, std::size_t r,
                                      const std::string& basis = "cosine",
                                      const QuadratureGrid& grid = midpoint_grid(256),
                                      bool allow_low_alpha = false);

// Same spectrum in closed form for off-grid evaluation.
SpectralKernel make_spectral_kernel(double alpha, std::size_t r,
                                    const std::string& basis = "cosine",
                                    bool allow_low_alpha = false);

// H_t(x) for every t; x is (d x tau) column-per-timestep, entries in [0,1].
std::vector<double> eval_target(const TargetSpec& spec, const Mat& x);

AttentionGraph ground_truth_graph(const TargetSpec& spec, const Mat& x);

// Measures of the constructed representation (no infimum search): K_F and sup
// norms by dense deterministic sampling, C1 = max_k sigma_k k^alpha.
ComplexityReport complexity_measures(const TargetSpec& spec, double alpha);

// The fixed sweep target family: d = 1, n_rho = 4, F a seeded sum of
// sigmoids, rho coordinatewise sigmoids, G spectral with the given decay.
TargetSpec make_sweep_target(double alpha, std::size_t r, std::size_t tau,
                             std::uint64_t seed = 17);

}  // namespace atrl
