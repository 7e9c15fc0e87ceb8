#pragma once

// Synthetic sequence datasets: planar gravity with inverse-square pairwise
// forces, causal scalar convolutions with exponential or random filters, and
// samples labeled by a target-form oracle. Plus the "SEQD" binary format and
// a CSV export.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atrl/mat.hpp"
#include "atrl/target.hpp"

namespace atrl {

struct SequenceSample {
  Mat x;  // (d x tau)
  Mat y;  // (d_out x tau)
};

enum class FilterKind : std::uint32_t { kExponential = 1, kRandom = 2 };

struct ConvolutionFilter {
  std::vector<double> rho;
  FilterKind kind = FilterKind::kExponential;

  void validate() const;  // exponential: rho[s] = e^{-s}; random: entries in [0,1]
};

struct Dataset {
  std::size_t tau = 0, d = 0, d_out = 0;
  std::vector<SequenceSample> samples;
  std::optional<ConvolutionFilter> filter;  // present for convolution datasets

  std::size_t count() const { return samples.size(); }
  void validate() const;  // header consistency, shapes, finiteness
};

struct Permutation {
  std::vector<std::size_t> p;  // permuted(t) = original(p[t]), 0-based

  void validate() const;  // bijection on {0..size-1}
  Permutation inverse() const;
  static Permutation identity(std::size_t tau);
  // Rotate left by k: p[i] = (i + k) mod tau. The default k moves the first
  // ten elements to the end of the sequence.
  static Permutation rotate_left(std::size_t tau, std::size_t k = 10);
};

struct GravityOptions {
  double eps = 0.05;  // lower clamp on pairwise distances
  double mass_lo = 0.1;
  double mass_hi = 1.0;
  bool causal = false;  // restrict each target's sum to s < t
};

// Acceleration targets for one configuration. x rows are (px, py, M); the
// result row-pairs are the 2-d acceleration sum_{s != t} M(s) Delta / dist^3
// with dist clamped below by opts.eps wherever it appears.
Mat gravity_targets(const Mat& x, const GravityOptions& opts = {});

// Row-normalized tau x tau matrix of weights M(s)/dist(t,s)^2, zero diagonal.
Mat gravity_graph(const Mat& x, const GravityOptions& opts = {});

// Positions uniform in [0,1]^2, masses uniform in [mass_lo, mass_hi].
Dataset gen_gravity(std::size_t tau, std::size_t count, std::uint64_t seed,
                    const GravityOptions& opts = {});

// y(t) = sum_{s=0}^{t} rho(s) x(t-s) for a scalar sequence x.
std::vector<double> convolve_causal(const std::vector<double>& rho,
                                    const std::vector<double>& x);

// Scalar sequences x(s) ~ U[0,1]; a random-kind filter is drawn once from the
// dataset seed before any sample. The filter is stored in the dataset.
Dataset gen_linear_functional(FilterKind kind, std::size_t tau, std::size_t count,
                              std::uint64_t seed);

// Permutes every input sequence along time; targets stay untouched.
Dataset apply_permutation(const Dataset& ds, const Permutation& perm);

// x i.i.d. uniform on [0,1]^{d x tau}, y from the target-form oracle.
Dataset gen_target_form_dataset(const TargetSpec& spec, std::size_t count,
                                std::uint64_t seed);

// "ATRL" envelope, section "SEQD"; bit-exact round trip.
void save_dataset(std::ostream& os, const Dataset& ds);
Dataset load_dataset(std::istream& is);
void save_dataset_file(const std::string& path, const Dataset& ds);
Dataset load_dataset_file(const std::string& path);

// One row per (sample, timestep): sample, t, x..., y...
void export_csv(std::ostream& os, const Dataset& ds);

}  // namespace atrl
