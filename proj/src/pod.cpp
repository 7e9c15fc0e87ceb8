#include "atrl/pod.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "atrl/envelope.hpp"
#include "atrl/svd.hpp"

namespace atrl {

double QuadratureGrid::length() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void QuadratureGrid::validate() const {
  if (points.empty() || points.size() != weights.size())
    throw std::invalid_argument("grid: points/weights size mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i]) || !std::isfinite(weights[i]) || weights[i] <= 0.0)
      throw std::invalid_argument("grid: weights must be positive and finite");
    if (i > 0 && points[i] <= points[i - 1])
      throw std::invalid_argument("grid: points must be strictly increasing");
  }
}

QuadratureGrid midpoint_grid(std::size_t n, double lo, double hi) {
  if (n == 0 || !(hi > lo)) throw std::invalid_argument("midpoint_grid: need n >= 1 and hi > lo");
  QuadratureGrid g;
  g.points.resize(n);
  g.weights.resize(n);
  const double h = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.points[i] = lo + (static_cast<double>(i) + 0.5) * h;
    g.weights[i] = h;
  }
  return g;
}

double SpectralFactorization::reconstruct(std::size_t i, std::size_t j, std::size_t r) const {
  const std::size_t k_max = std::min(r, rank());
  double s = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) s += sigma[k] * left(i, k) * right(j, k);
  return s;
}

SpectralFactorization pod(const std::function<double(double, double)>& G,
                          const QuadratureGrid& grid) {
  grid.validate();
  const std::size_t n = grid.size();
  if (n < 2) throw std::invalid_argument("pod: grid size must be >= 2");

  std::vector<double> sw(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(grid.weights[i]);

  Mat A(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = G(grid.points[i], grid.points[j]);
      if (!std::isfinite(g)) {
        std::ostringstream msg;
        msg << "pod: non-finite G value at (" << grid.points[i] << ", " << grid.points[j] << ")";
        throw std::invalid_argument(msg.str());
      }
      A(i, j) = sw[i] * g * sw[j];
    }
  }

  SvdResult f = svd(A);
  SpectralFactorization out;
  out.sigma = std::move(f.S);
  out.grid = grid;
  out.left = Mat(n, out.sigma.size());
  out.right = Mat(n, out.sigma.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < out.sigma.size(); ++k) {
      out.left(i, k) = f.U(i, k) / sw[i];
      out.right(i, k) = f.V(i, k) / sw[i];
    }
  }
  return out;
}

double truncation_error(const std::vector<double>& sigma, std::size_t r) {
  double s2 = 0.0;
  for (std::size_t k = r; k < sigma.size(); ++k) s2 += sigma[k] * sigma[k];
  return std::sqrt(s2);
}

double truncation_error(const SpectralFactorization& fact, std::size_t r) {
  return truncation_error(fact.sigma, r);
}

std::pair<double, double> fit_decay_exponent(const std::vector<double>& sigma) {
  std::vector<std::pair<double, double>> pts;  // (log k, log sigma_k), k 1-based
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > 0.0)
      pts.emplace_back(std::log(static_cast<double>(i + 1)), std::log(sigma[i]));
  }
  if (pts.size() < 3)
    throw std::invalid_argument("fit_decay_exponent: need at least 3 nonzero singular values, have " +
                                std::to_string(pts.size()));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double nn = static_cast<double>(pts.size());
  const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
  const double alpha = -slope;
  double c = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > 0.0)
      c = std::max(c, sigma[i] * std::pow(static_cast<double>(i + 1), alpha));
  }
  return {c, alpha};
}

namespace {

void write_mat(std::ostream& os, const Mat& m) {
  io::write_u64(os, m.rows);
  io::write_u64(os, m.cols);
  io::write_f64s(os, m.a.data(), m.a.size());
}

Mat read_mat(std::istream& is, const char* what) {
  const std::uint64_t r = io::read_u64(is, what);
  const std::uint64_t c = io::read_u64(is, what);
  if (r == 0 || c == 0 || r > (1u << 20) || c > (1u << 20))
    throw FormatError(FormatError::Kind::truncated, std::string("implausible matrix dims in ") + what);
  Mat m(r, c);
  io::read_f64s(is, m.a.data(), m.a.size(), what);
  return m;
}

}  // namespace

void save_spectral(std::ostream& os, const SpectralFactorization& fact) {
  io::write_envelope_header(os, "SPEC");
  const std::size_t n = fact.grid.size();
  io::write_u64(os, n);
  io::write_f64s(os, fact.grid.points.data(), n);
  io::write_f64s(os, fact.grid.weights.data(), n);
  io::write_u64(os, fact.sigma.size());
  io::write_f64s(os, fact.sigma.data(), fact.sigma.size());
  write_mat(os, fact.left);
  write_mat(os, fact.right);
}

SpectralFactorization load_spectral(std::istream& is) {
  io::read_envelope_header(is, "SPEC");
  SpectralFactorization f;
  const std::uint64_t n = io::read_u64(is, "grid size");
  if (n == 0 || n > (1u << 20))
    throw FormatError(FormatError::Kind::truncated, "implausible grid size");
  f.grid.points.resize(n);
  f.grid.weights.resize(n);
  io::read_f64s(is, f.grid.points.data(), n, "grid points");
  io::read_f64s(is, f.grid.weights.data(), n, "grid weights");
  const std::uint64_t k = io::read_u64(is, "sigma count");
  if (k > (1u << 20)) throw FormatError(FormatError::Kind::truncated, "implausible sigma count");
  f.sigma.resize(k);
  io::read_f64s(is, f.sigma.data(), k, "sigma");
  f.left = read_mat(is, "left factor");
  f.right = read_mat(is, "right factor");
  return f;
}

void save_spectral_file(const std::string& path, const SpectralFactorization& fact) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_spectral(os, fact);
}

SpectralFactorization load_spectral_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_spectral(is);
}

}  // namespace atrl
