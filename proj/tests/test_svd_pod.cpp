#include "doctest.h"

#include <cmath>
#include <sstream>

#include "atrl/envelope.hpp"
#include "atrl/pod.hpp"
#include "atrl/rng.hpp"
#include "atrl/svd.hpp"

using namespace atrl;

namespace {

Mat random_mat(Rng& rng, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (double& v : m.a) v = rng.normal();
  return m;
}

double recon_residual(const Mat& M, const SvdResult& f) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < M.rows; ++i) {
    for (std::size_t j = 0; j < M.cols; ++j) {
      double r = 0.0;
      for (std::size_t k = 0; k < f.S.size(); ++k) r += f.U(i, k) * f.S[k] * f.V(j, k);
      num += (M(i, j) - r) * (M(i, j) - r);
      den += M(i, j) * M(i, j);
    }
  }
  return std::sqrt(num) / std::max(1e-300, std::sqrt(den));
}

double max_ortho_defect(const Mat& Q) {
  double worst = 0.0;
  for (std::size_t a = 0; a < Q.cols; ++a) {
    for (std::size_t b = a; b < Q.cols; ++b) {
      double d = 0.0;
      for (std::size_t i = 0; i < Q.rows; ++i) d += Q(i, a) * Q(i, b);
      worst = std::max(worst, std::fabs(d - (a == b ? 1.0 : 0.0)));
    }
  }
  return worst;
}

double weighted_dot(const QuadratureGrid& g, const Mat& F, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.weights[i] * F(i, a) * F(i, b);
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("svd_pod");

TEST_CASE("svd of diag(3,1)") {
  Mat m(2, 2);
  m(0, 0) = 3;
  m(1, 1) = 1;
  SvdResult f = svd(m);
  CHECK(f.S[0] == doctest::Approx(3).epsilon(1e-14));
  CHECK(f.S[1] == doctest::Approx(1).epsilon(1e-14));
}

TEST_CASE("svd reconstructs random matrices to 1e-10") {
  Rng rng(314);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{8, 8}, {5, 9}, {12, 3}, {1, 7}}) {
    Mat m = random_mat(rng, r, c);
    SvdResult f = svd(m);
    CHECK(recon_residual(m, f) < 1e-10);
    CHECK(max_ortho_defect(f.U) < 1e-10);
    CHECK(max_ortho_defect(f.V) < 1e-10);
    for (std::size_t k = 1; k < f.S.size(); ++k) CHECK(f.S[k] <= f.S[k - 1]);
  }
}

TEST_CASE("svd exposes exact rank of an outer-product sum") {
  Rng rng(55);
  const std::size_t n = 8;
  Mat m(n, n);
  for (int term = 0; term < 2; ++term) {
    std::vector<double> u(n), v(n);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) += u[i] * v[j];
  }
  SvdResult f = svd(m);
  for (std::size_t k = 2; k < n; ++k) CHECK(f.S[k] < 1e-12);
  CHECK(max_ortho_defect(f.U) < 1e-10);  // zero-sigma columns still orthonormal
}

TEST_CASE("svd rejects non-finite input") {
  Mat m(2, 2);
  m(0, 1) = std::nan("");
  CHECK_THROWS_AS(svd(m), std::invalid_argument);
}

TEST_CASE("eckart-young: truncation error equals singular tail") {
  Rng rng(77);
  const std::size_t n = 8, rank = 4;
  Mat m(n, n);
  for (std::size_t term = 0; term < rank; ++term) {
    std::vector<double> u(n), v(n);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) += u[i] * v[j];
  }
  SvdResult f = svd(m);
  for (std::size_t r = 0; r <= rank + 1; ++r) {
    double err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double approx = 0.0;
        for (std::size_t k = 0; k < r; ++k) approx += f.U(i, k) * f.S[k] * f.V(j, k);
        err2 += (m(i, j) - approx) * (m(i, j) - approx);
      }
    }
    double tail2 = 0.0;
    for (std::size_t k = r; k < f.S.size(); ++k) tail2 += f.S[k] * f.S[k];
    CHECK(std::sqrt(err2) == doctest::Approx(std::sqrt(tail2)).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("midpoint grid sums to interval length, points increasing") {
  QuadratureGrid g = midpoint_grid(256);
  CHECK(g.length() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.points[i] > g.points[i - 1]);
  QuadratureGrid g2 = midpoint_grid(100, -1.0, 2.5);
  CHECK(g2.length() == doctest::Approx(3.5).epsilon(1e-12));
  CHECK_THROWS_AS(midpoint_grid(0), std::invalid_argument);
}

TEST_CASE("pod of constant kernel is rank one with constant factors") {
  QuadratureGrid g = midpoint_grid(64);
  auto f = pod([](double, double) { return 1.0; }, g);
  CHECK(f.sigma[0] == doctest::Approx(1.0).epsilon(1e-12));  // |I| = 1
  for (std::size_t k = 1; k < f.rank(); ++k) CHECK(f.sigma[k] < 1e-12);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(f.left(i, 0) == doctest::Approx(f.left(0, 0)).epsilon(1e-10));
    CHECK(f.right(i, 0) == doctest::Approx(f.right(0, 0)).epsilon(1e-10));
  }
}

TEST_CASE("pod of u*v has a single singular value near 1/3") {
  QuadratureGrid g = midpoint_grid(256);
  auto f = pod([](double u, double v) { return u * v; }, g);
  // midpoint quadrature of u^2 carries O(h^2) ~ 1.3e-6 error at N = 256
  CHECK(f.sigma[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
  for (std::size_t k = 1; k < f.rank(); ++k) CHECK(f.sigma[k] < 1e-12);
}

TEST_CASE("pod round-trips a cosine expansion with k^-1 spectrum") {
  // sqrt(2) cos(k pi u) are exactly orthonormal under midpoint quadrature,
  // so the recovered spectrum should match to SVD precision.
  QuadratureGrid g = midpoint_grid(256);
  const std::size_t r = 6;
  auto G = [&](double u, double v) {
    double s = 0.0;
    for (std::size_t k = 1; k <= r; ++k)
      s += (1.0 / static_cast<double>(k)) * 2.0 * std::cos(k * M_PI * u) * std::cos(k * M_PI * v);
    return s;
  };
  auto f = pod(G, g);
  for (std::size_t k = 0; k < r; ++k)
    CHECK(f.sigma[k] == doctest::Approx(1.0 / static_cast<double>(k + 1)).epsilon(1e-8));
  for (std::size_t k = r; k < f.rank(); ++k) CHECK(f.sigma[k] < 1e-10);

  SUBCASE("factors are orthonormal in the weighted inner product") {
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t b = a; b < r; ++b) {
        const double expect = (a == b) ? 1.0 : 0.0;
        CHECK(weighted_dot(g, f.left, a, b) == doctest::Approx(expect).epsilon(1e-8).scale(1.0));
        CHECK(weighted_dot(g, f.right, a, b) == doctest::Approx(expect).epsilon(1e-8).scale(1.0));
      }
    }
  }

  SUBCASE("full reconstruction matches G in weighted Frobenius") {
    double err2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double d = G(g.points[i], g.points[j]) - f.reconstruct(i, j, f.rank());
        err2 += g.weights[i] * g.weights[j] * d * d;
      }
    CHECK(std::sqrt(err2) < 1e-8);
  }

  SUBCASE("rank-r truncation error matches the singular tail") {
    const std::size_t rr = 3;
    double err2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double d = G(g.points[i], g.points[j]) - f.reconstruct(i, j, rr);
        err2 += g.weights[i] * g.weights[j] * d * d;
      }
    CHECK(std::sqrt(err2) == doctest::Approx(truncation_error(f, rr)).epsilon(1e-8));
  }
}

TEST_CASE("pod of the transpose has identical singular values") {
  QuadratureGrid g = midpoint_grid(96);
  auto G = [](double u, double v) { return std::exp(u * v) + 0.3 * std::sin(3 * u) * v; };
  auto Gt = [&](double u, double v) { return G(v, u); };
  auto f1 = pod(G, g);
  auto f2 = pod(Gt, g);
  for (std::size_t k = 0; k < 8; ++k)
    CHECK(f1.sigma[k] == doctest::Approx(f2.sigma[k]).epsilon(1e-10).scale(1.0));
}

TEST_CASE("grid refinement barely moves the spectrum of a smooth kernel") {
  auto G = [](double u, double v) { return std::exp(u * v); };
  auto f1 = pod(G, midpoint_grid(128));
  auto f2 = pod(G, midpoint_grid(256));
  // quadrature error is absolute in ||G||, so the relative bound applies to
  // the dominant part of the spectrum; the tail gets an absolute bound
  for (std::size_t k = 0; k < 8; ++k) {
    if (f1.sigma[k] > 1e-2 * f1.sigma[0])
      CHECK(std::fabs(f1.sigma[k] - f2.sigma[k]) / f2.sigma[k] < 1e-4);
    else
      CHECK(std::fabs(f1.sigma[k] - f2.sigma[k]) < 1e-4 * f1.sigma[0]);
  }
}

TEST_CASE("pod rejects non-finite kernels") {
  QuadratureGrid g = midpoint_grid(8);
  CHECK_THROWS_AS(pod([](double u, double v) { return (u > 0.5 && v > 0.5) ? std::nan("") : 1.0; }, g),
                  std::invalid_argument);
}

TEST_CASE("truncation_error oracles") {
  CHECK(truncation_error(std::vector<double>{3, 2, 1}, 3) == 0.0);
  CHECK(truncation_error(std::vector<double>{3, 2, 1}, 7) == 0.0);
  CHECK(truncation_error(std::vector<double>{3, 4}, 1) == doctest::Approx(4.0));
  std::vector<double> sig;
  for (std::size_t k = 1; k <= 64; ++k) sig.push_back(1.0 / static_cast<double>(k));
  double tail2 = 0.0;
  for (std::size_t k = 7; k <= 64; ++k) tail2 += 1.0 / (static_cast<double>(k) * k);
  CHECK(truncation_error(sig, 6) == doctest::Approx(std::sqrt(tail2)).epsilon(1e-14));
}

TEST_CASE("fit_decay_exponent recovers exact power laws") {
  std::vector<double> s1, s2;
  for (std::size_t k = 1; k <= 32; ++k) {
    s1.push_back(std::pow(static_cast<double>(k), -1.0));
    s2.push_back(2.0 * std::pow(static_cast<double>(k), -0.55));
  }
  auto [c1, a1] = fit_decay_exponent(s1);
  CHECK(a1 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(c1 == doctest::Approx(1.0).epsilon(1e-10));
  auto [c2, a2] = fit_decay_exponent(s2);
  CHECK(a2 == doctest::Approx(0.55).epsilon(1e-10));
  CHECK(c2 == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("fit_decay_exponent bound holds exactly on the data") {
  Rng rng(9);
  std::vector<double> s;
  for (std::size_t k = 1; k <= 20; ++k)
    s.push_back(std::pow(static_cast<double>(k), -0.8) * std::exp(0.1 * rng.normal()));
  std::sort(s.begin(), s.end(), std::greater<>());
  auto [c, a] = fit_decay_exponent(s);
  for (std::size_t k = 1; k <= s.size(); ++k)
    CHECK(s[k - 1] <= c * std::pow(static_cast<double>(k), -a) * (1 + 1e-12));
}

TEST_CASE("fit_decay_exponent needs three nonzero values") {
  CHECK_THROWS_AS(fit_decay_exponent({1.0, 0.5, 0.0, 0.0}), std::invalid_argument);
  CHECK_NOTHROW(fit_decay_exponent({1.0, 0.5, 0.2}));
}

TEST_CASE("spectral factorization round-trips bit-exactly through the envelope") {
  QuadratureGrid g = midpoint_grid(24);
  auto f = pod([](double u, double v) { return std::cos(u + 2 * v); }, g);
  std::stringstream buf;
  save_spectral(buf, f);
  SpectralFactorization f2 = load_spectral(buf);
  REQUIRE(f2.sigma.size() == f.sigma.size());
  for (std::size_t k = 0; k < f.sigma.size(); ++k) CHECK(f2.sigma[k] == f.sigma[k]);
  CHECK(f2.left.a == f.left.a);
  CHECK(f2.right.a == f.right.a);
  CHECK(f2.grid.points == f.grid.points);
  CHECK(f2.grid.weights == f.grid.weights);
}

TEST_CASE("envelope readers classify corrupt files") {
  QuadratureGrid g = midpoint_grid(8);
  auto f = pod([](double u, double v) { return u + v; }, g);
  std::stringstream buf;
  save_spectral(buf, f);
  const std::string good = buf.str();

  {
    std::string bad = good;
    bad[0] = 'X';
    std::stringstream in(bad);
    try {
      load_spectral(in);
      FAIL("expected bad_magic");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::bad_magic);
    }
  }
  {
    std::string bad = good;
    bad[4] = 99;  // version field
    std::stringstream in(bad);
    try {
      load_spectral(in);
      FAIL("expected bad_version");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::bad_version);
    }
  }
  {
    std::stringstream in(good.substr(0, good.size() / 2));
    try {
      load_spectral(in);
      FAIL("expected truncated");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::truncated);
    }
  }
}

TEST_SUITE_END();
