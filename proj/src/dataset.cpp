#include "atrl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "atrl/envelope.hpp"
#include "atrl/rng.hpp"

namespace atrl {

void ConvolutionFilter::validate() const {
  if (rho.empty()) throw std::invalid_argument("filter: empty");
  for (std::size_t s = 0; s < rho.size(); ++s) {
    if (!std::isfinite(rho[s])) throw std::invalid_argument("filter: non-finite entry");
    if (kind == FilterKind::kExponential) {
      if (rho[s] != std::exp(-static_cast<double>(s)))
        throw std::invalid_argument("filter: exponential kind must have rho[s] = e^-s");
    } else if (rho[s] < 0.0 || rho[s] > 1.0) {
      throw std::invalid_argument("filter: random kind must stay in [0,1]");
    }
  }
}

void Dataset::validate() const {
  if (tau == 0 || d == 0 || d_out == 0)
    throw std::invalid_argument("dataset: tau, d, d_out must be positive");
  for (const SequenceSample& s : samples) {
    if (s.x.rows != d || s.x.cols != tau || s.y.rows != d_out || s.y.cols != tau)
      throw std::invalid_argument("dataset: sample shape does not match header");
    for (double v : s.x.a)
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite input");
    for (double v : s.y.a)
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite target");
  }
  if (filter) {
    filter->validate();
    if (filter->rho.size() != tau)
      throw std::invalid_argument("dataset: filter length does not match tau");
  }
}

void Permutation::validate() const {
  std::vector<std::size_t> seen(p.size(), 0);
  for (std::size_t v : p) {
    if (v >= p.size()) throw std::invalid_argument("permutation: index out of range");
    ++seen[v];
  }
  for (std::size_t c : seen)
    if (c != 1) throw std::invalid_argument("permutation: not a bijection");
}

Permutation Permutation::inverse() const {
  validate();
  Permutation inv;
  inv.p.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv.p[p[i]] = i;
  return inv;
}

Permutation Permutation::identity(std::size_t tau) {
  Permutation perm;
  perm.p.resize(tau);
  for (std::size_t i = 0; i < tau; ++i) perm.p[i] = i;
  return perm;
}

Permutation Permutation::rotate_left(std::size_t tau, std::size_t k) {
  if (tau == 0) throw std::invalid_argument("permutation: tau must be positive");
  Permutation perm;
  perm.p.resize(tau);
  for (std::size_t i = 0; i < tau; ++i) perm.p[i] = (i + k) % tau;
  return perm;
}

namespace {

void check_gravity_config(const Mat& x, const GravityOptions& opts) {
  if (x.rows != 3 || x.cols < 2)
    throw std::invalid_argument("gravity: configuration must be (3 x tau) with tau >= 2");
  if (!(opts.eps > 0.0)) throw std::invalid_argument("gravity: eps must be positive");
  for (std::size_t s = 0; s < x.cols; ++s) {
    if (!std::isfinite(x(0, s)) || !std::isfinite(x(1, s)) || !std::isfinite(x(2, s)))
      throw std::invalid_argument("gravity: non-finite configuration");
    if (x(2, s) < 0.0) throw std::invalid_argument("gravity: negative mass");
  }
}

double clamped_dist(const Mat& x, std::size_t t, std::size_t s, double eps) {
  const double dx = x(0, s) - x(0, t);
  const double dy = x(1, s) - x(1, t);
  return std::max(std::sqrt(dx * dx + dy * dy), eps);
}

}  // namespace

Mat gravity_targets(const Mat& x, const GravityOptions& opts) {
  check_gravity_config(x, opts);
  const std::size_t tau = x.cols;
  Mat y(2, tau);
  for (std::size_t t = 0; t < tau; ++t) {
    double ax = 0.0, ay = 0.0;
    const std::size_t last = opts.causal ? t : tau;
    for (std::size_t s = 0; s < last; ++s) {
      if (s == t) continue;
      const double dist = clamped_dist(x, t, s, opts.eps);
      const double w = x(2, s) / (dist * dist * dist);
      ax += w * (x(0, s) - x(0, t));
      ay += w * (x(1, s) - x(1, t));
    }
    y(0, t) = ax;
    y(1, t) = ay;
  }
  return y;
}

Mat gravity_graph(const Mat& x, const GravityOptions& opts) {
  check_gravity_config(x, opts);
  const std::size_t tau = x.cols;
  Mat g(tau, tau);
  for (std::size_t t = 0; t < tau; ++t) {
    double row = 0.0;
    for (std::size_t s = 0; s < tau; ++s) {
      if (s == t) continue;
      const double dist = clamped_dist(x, t, s, opts.eps);
      g(t, s) = x(2, s) / (dist * dist);
      row += g(t, s);
    }
    if (!(row > 0.0))
      throw std::runtime_error("gravity graph: row " + std::to_string(t) +
                               " has no positive weight");
    for (std::size_t s = 0; s < tau; ++s) g(t, s) /= row;
  }
  return g;
}

Dataset gen_gravity(std::size_t tau, std::size_t count, std::uint64_t seed,
                    const GravityOptions& opts) {
  if (tau < 2) throw std::invalid_argument("gravity: need at least two particles");
  if (opts.mass_lo <= 0.0 || opts.mass_hi < opts.mass_lo)
    throw std::invalid_argument("gravity: bad mass range");
  Dataset ds;
  ds.tau = tau;
  ds.d = 3;
  ds.d_out = 2;
  Rng rng(seed);
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceSample smp;
    smp.x = Mat(3, tau);
    for (std::size_t s = 0; s < tau; ++s) {
      smp.x(0, s) = rng.uniform();
      smp.x(1, s) = rng.uniform();
      smp.x(2, s) = rng.uniform(opts.mass_lo, opts.mass_hi);
    }
    smp.y = gravity_targets(smp.x, opts);
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

std::vector<double> convolve_causal(const std::vector<double>& rho,
                                    const std::vector<double>& x) {
  if (rho.size() != x.size())
    throw std::invalid_argument("convolution: filter and sequence lengths differ");
  const std::size_t tau = x.size();
  std::vector<double> y(tau, 0.0);
  for (std::size_t t = 0; t < tau; ++t) {
    double acc = 0.0;
    for (std::size_t s = 0; s <= t; ++s) acc += rho[s] * x[t - s];
    y[t] = acc;
  }
  return y;
}

Dataset gen_linear_functional(FilterKind kind, std::size_t tau, std::size_t count,
                              std::uint64_t seed) {
  if (tau == 0) throw std::invalid_argument("convolution: tau must be positive");
  Dataset ds;
  ds.tau = tau;
  ds.d = 1;
  ds.d_out = 1;
  Rng rng(seed);
  ConvolutionFilter filter;
  filter.kind = kind;
  filter.rho.resize(tau);
  for (std::size_t s = 0; s < tau; ++s)
    filter.rho[s] = (kind == FilterKind::kExponential) ? std::exp(-static_cast<double>(s))
                                                       : rng.uniform();
  ds.filter = filter;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceSample smp;
    smp.x = Mat(1, tau);
    for (std::size_t t = 0; t < tau; ++t) smp.x(0, t) = rng.uniform();
    const std::vector<double> y = convolve_causal(filter.rho, smp.x.a);
    smp.y = Mat(1, tau);
    smp.y.a = y;
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

Dataset apply_permutation(const Dataset& ds, const Permutation& perm) {
  perm.validate();
  if (perm.p.size() != ds.tau)
    throw std::invalid_argument("permutation: length " + std::to_string(perm.p.size()) +
                                " does not match tau = " + std::to_string(ds.tau));
  Dataset out = ds;
  for (SequenceSample& smp : out.samples) {
    Mat xp(smp.x.rows, smp.x.cols);
    for (std::size_t i = 0; i < smp.x.rows; ++i)
      for (std::size_t t = 0; t < smp.x.cols; ++t) xp(i, t) = smp.x(i, perm.p[t]);
    smp.x = std::move(xp);
  }
  return out;
}

Dataset gen_target_form_dataset(const TargetSpec& spec, std::size_t count,
                                std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.tau = spec.tau;
  ds.d = spec.d;
  ds.d_out = 1;
  Rng rng(seed);
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceSample smp;
    smp.x = Mat(spec.d, spec.tau);
    for (double& v : smp.x.a) v = rng.uniform();
    smp.y = Mat(1, spec.tau);
    smp.y.a = eval_target(spec, smp.x);
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

void save_dataset(std::ostream& os, const Dataset& ds) {
  ds.validate();
  io::write_envelope_header(os, "SEQD");
  io::write_u64(os, ds.tau);
  io::write_u64(os, ds.d);
  io::write_u64(os, ds.d_out);
  io::write_u64(os, ds.count());
  io::write_u32(os, ds.filter ? static_cast<std::uint32_t>(ds.filter->kind) : 0);
  if (ds.filter) {
    io::write_u64(os, ds.filter->rho.size());
    io::write_f64s(os, ds.filter->rho.data(), ds.filter->rho.size());
  }
  for (const SequenceSample& smp : ds.samples) {
    io::write_f64s(os, smp.x.a.data(), smp.x.a.size());
    io::write_f64s(os, smp.y.a.data(), smp.y.a.size());
  }
}

Dataset load_dataset(std::istream& is) {
  io::read_envelope_header(is, "SEQD");
  Dataset ds;
  ds.tau = io::read_u64(is, "tau");
  ds.d = io::read_u64(is, "d");
  ds.d_out = io::read_u64(is, "d_out");
  const std::uint64_t count = io::read_u64(is, "count");
  if (ds.tau == 0 || ds.d == 0 || ds.d_out == 0 || ds.tau > (1u << 20) ||
      ds.d > (1u << 20) || ds.d_out > (1u << 20))
    throw FormatError(FormatError::Kind::truncated, "implausible dataset header");
  const std::uint64_t per_sample = (ds.d + ds.d_out) * ds.tau;
  if (count > 0 && per_sample > (1ull << 27) / count)
    throw FormatError(FormatError::Kind::truncated, "implausible dataset size");
  const std::uint32_t fk = io::read_u32(is, "filter kind");
  if (fk != 0) {
    if (fk != 1 && fk != 2)
      throw FormatError(FormatError::Kind::truncated, "unknown filter kind");
    ConvolutionFilter filter;
    filter.kind = static_cast<FilterKind>(fk);
    const std::uint64_t len = io::read_u64(is, "filter length");
    if (len == 0 || len > (1u << 20))
      throw FormatError(FormatError::Kind::truncated, "implausible filter length");
    filter.rho.resize(len);
    io::read_f64s(is, filter.rho.data(), len, "filter");
    ds.filter = std::move(filter);
  }
  ds.samples.resize(count);
  for (SequenceSample& smp : ds.samples) {
    smp.x = Mat(ds.d, ds.tau);
    smp.y = Mat(ds.d_out, ds.tau);
    io::read_f64s(is, smp.x.a.data(), smp.x.a.size(), "sample input");
    io::read_f64s(is, smp.y.a.data(), smp.y.a.size(), "sample target");
  }
  ds.validate();
  return ds;
}

void save_dataset_file(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_dataset(os, ds);
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_dataset(is);
}

void export_csv(std::ostream& os, const Dataset& ds) {
  os << "sample,t";
  for (std::size_t i = 0; i < ds.d; ++i) os << ",x" << i;
  for (std::size_t i = 0; i < ds.d_out; ++i) os << ",y" << i;
  os << "\n";
  char buf[32];
  for (std::size_t n = 0; n < ds.count(); ++n)
    for (std::size_t t = 0; t < ds.tau; ++t) {
      os << n << "," << t;
      for (std::size_t i = 0; i < ds.d; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.samples[n].x(i, t));
        os << "," << buf;
      }
      for (std::size_t i = 0; i < ds.d_out; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.samples[n].y(i, t));
        os << "," << buf;
      }
      os << "\n";
    }
}

}  // namespace atrl
