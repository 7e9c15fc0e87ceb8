#include "doctest.h"

#include <cmath>
#include <numeric>

#include "atrl/expr.hpp"
#include "atrl/pod.hpp"
#include "atrl/rng.hpp"
#include "atrl/target.hpp"

using namespace atrl;

namespace {

Mat random_input(Rng& rng, std::size_t d, std::size_t tau) {
  Mat x(d, tau);
  for (double& v : x.a) v = rng.uniform();
  return x;
}

}  // namespace

TEST_SUITE_BEGIN("expr_target");

TEST_CASE("expression evaluation and arity") {
  Expr e = Expr::constant(2.0) * Expr::var(0) + sin(Expr::var(1));
  CHECK(e({3.0, 0.0}) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(e({1.0, M_PI / 2}) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.arity() == 2);
  CHECK(Expr::constant(5).arity() == 0);
  CHECK_THROWS_AS(e({1.0}), std::invalid_argument);  // u1 out of range
}

TEST_CASE("symbolic derivatives match finite differences") {
  Expr f = sigmoid(Expr::var(0) * Expr::constant(2.0)) * cos(Expr::var(1)) +
           exp(Expr::var(0) - Expr::var(1)) / (Expr::constant(2.0) + tanh(Expr::var(1)));
  Rng rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> u = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (std::size_t v = 0; v < 2; ++v) {
      const double h = 1e-6;
      std::vector<double> up = u, um = u;
      up[v] += h;
      um[v] -= h;
      const double fd = (f(up) - f(um)) / (2 * h);
      CHECK(f.derivative(v)(u) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("expression json round trip") {
  Expr e = -(sigmoid(Expr::var(2)) * Expr::constant(1.5)) + Expr::var(0) / tanh(Expr::var(1));
  Expr back = Expr::from_json(e.to_json());
  CHECK(back.to_json() == e.to_json());
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> u = {rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)};
    CHECK(back(u) == e(u));
  }
  // string round trip is exact too
  Expr back2 = Expr::from_json(nlohmann::json::parse(e.to_json().dump()));
  std::vector<double> u = {0.3, 0.7, 0.9};
  CHECK(back2(u) == e(u));
}

TEST_CASE("expression json rejects malformed nodes") {
  CHECK_THROWS_AS(Expr::from_json({{"op", "frobnicate"}, {"arg", nullptr}}), std::invalid_argument);
  CHECK_THROWS_AS(Expr::from_json({{"op", "const"}}), std::invalid_argument);
  CHECK_THROWS_AS(Expr::from_json({{"op", "const"}, {"value", 1.0}, {"extra", 2}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Expr::from_json({{"op", "add"}, {"lhs", {{"op", "const"}, {"value", 1.0}}}}),
                  std::invalid_argument);
}

TEST_CASE("make_spectral_G spectra match the declared decay") {
  auto g2 = make_spectral_G(1.0, 2);
  CHECK(g2.sigma[0] == doctest::Approx(1.0));
  CHECK(g2.sigma[1] == doctest::Approx(0.5));
  for (std::size_t k = 2; k < g2.sigma.size(); ++k) CHECK(g2.sigma[k] == 0.0);

  auto g6 = make_spectral_G(0.55, 6);
  CHECK(g6.sigma[5] == doctest::Approx(std::pow(6.0, -0.55)).epsilon(1e-14));
  CHECK(g6.sigma[6] == 0.0);

  auto ginf = make_spectral_G(0.55, kRankInfinite);
  CHECK(ginf.sigma.size() == kInfiniteRankTerms);
  CHECK(ginf.sigma.back() == doctest::Approx(std::pow(64.0, -0.55)).epsilon(1e-14));
}

TEST_CASE("make_spectral_G enforces the decay-exponent floor") {
  CHECK_THROWS_AS(make_spectral_G(0.5, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_spectral_G(0.3, 4), std::invalid_argument);
  CHECK_NOTHROW(make_spectral_G(0.3, 4, "cosine", midpoint_grid(32), true));
}

TEST_CASE("make_spectral_G factors are orthonormal under the grid weights") {
  auto f = make_spectral_G(1.0, 4, "cosine", midpoint_grid(128));
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = a; b < 6; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < f.grid.size(); ++i)
        dot += f.grid.weights[i] * f.left(i, a) * f.left(i, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("pod round-trips the constructed spectrum within 1e-6") {
  const double alpha = 1.0;
  const std::size_t r = 6;
  SpectralKernel ker = make_spectral_kernel(alpha, r);
  QuadratureGrid grid = midpoint_grid(256);
  auto f = pod([&](double u, double v) { return ker(u, v); }, grid);
  for (std::size_t k = 1; k <= r; ++k)
    CHECK(f.sigma[k - 1] == doctest::Approx(std::pow(double(k), -alpha)).epsilon(1e-6));
  for (std::size_t k = r; k < 12; ++k) CHECK(f.sigma[k] < 1e-6);
}

TEST_CASE("uniform attention under a vanishing kernel") {
  TargetSpec spec;
  spec.tau = 5;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {sigmoid(Expr::constant(3.0) * Expr::var(0) - Expr::constant(1.0)),
              sigmoid(-Expr::var(0))};
  spec.G = Expr::constant(0.0);
  spec.validate();

  Rng rng(8);
  Mat x = random_input(rng, 1, 5);
  auto H = eval_target(spec, x);
  double mean = 0.0;
  for (std::size_t s = 0; s < 5; ++s) mean += spec.rho[0]({x(0, s)});
  mean /= 5.0;
  for (double h : H) CHECK(h == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("single-timestep target degenerates to F of rho") {
  TargetSpec spec;
  spec.tau = 1;
  spec.d = 1;
  spec.F = Expr::var(0) + Expr::constant(0.25);
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = make_spectral_kernel(1.0, 3);
  spec.validate();
  Mat x(1, 1);
  x(0, 0) = 0.4;
  auto H = eval_target(spec, x);
  CHECK(H.size() == 1);
  CHECK(H[0] == doctest::Approx(spec.F({spec.rho[0]({0.4})})).epsilon(1e-15));
}

TEST_CASE("eval_target matches a straight-line reimplementation") {
  // independently coded target: plain lambdas, naive softmax, no shared kernels
  const double alpha = 0.8;
  const std::size_t r = 5, tau = 6;
  TargetSpec spec;
  spec.tau = tau;
  spec.d = 1;
  spec.F = Expr::constant(1.2) * sigmoid(Expr::constant(2.0) * Expr::var(0) - Expr::constant(0.5)) +
           Expr::constant(0.7) * sigmoid(Expr::var(1));
  spec.rho = {sigmoid(Expr::constant(2.5) * Expr::var(0) - Expr::constant(1.0)),
              sigmoid(Expr::constant(-1.5) * Expr::var(0) + Expr::constant(0.25))};
  spec.G = make_spectral_kernel(alpha, r);
  spec.validate();

  auto ref_sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto ref_F = [&](double a, double b) {
    return 1.2 * ref_sigmoid(2.0 * a - 0.5) + 0.7 * ref_sigmoid(b);
  };
  auto ref_rho0 = [&](double u) { return ref_sigmoid(2.5 * u - 1.0); };
  auto ref_rho1 = [&](double u) { return ref_sigmoid(-1.5 * u + 0.25); };
  auto ref_G = [&](double u, double v) {
    double s = 0.0;
    for (std::size_t k = 1; k <= r; ++k)
      s += std::pow(double(k), -alpha) * 2.0 * std::cos(k * M_PI * u) * std::cos(k * M_PI * v);
    return s;
  };

  Rng rng(123);
  for (int rep = 0; rep < 20; ++rep) {
    Mat x = random_input(rng, 1, tau);
    auto H = eval_target(spec, x);
    for (std::size_t t = 0; t < tau; ++t) {
      double denom = 0.0;
      std::vector<double> w(tau);
      for (std::size_t s = 0; s < tau; ++s) {
        w[s] = std::exp(ref_G(x(0, t), x(0, s)));
        denom += w[s];
      }
      double p0 = 0.0, p1 = 0.0;
      for (std::size_t s = 0; s < tau; ++s) {
        p0 += w[s] / denom * ref_rho0(x(0, s));
        p1 += w[s] / denom * ref_rho1(x(0, s));
      }
      CHECK(H[t] == doctest::Approx(ref_F(p0, p1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("eval_target rejects out-of-domain input") {
  TargetSpec spec = make_sweep_target(1.0, 2, 4);
  Mat x(1, 4);
  x(0, 2) = 1.5;
  CHECK_THROWS_AS(eval_target(spec, x), std::invalid_argument);
  Mat bad_shape(2, 4, 0.5);
  CHECK_THROWS_AS(eval_target(spec, bad_shape), std::invalid_argument);
}

TEST_CASE("target outputs are permutation compatible") {
  TargetSpec spec = make_sweep_target(0.55, 6, 7);
  Rng rng(77);
  Mat x = random_input(rng, 1, 7);
  std::vector<std::size_t> p = {3, 0, 6, 1, 5, 2, 4};
  Mat xp(1, 7);
  for (std::size_t s = 0; s < 7; ++s) xp(0, s) = x(0, p[s]);
  auto H = eval_target(spec, x);
  auto Hp = eval_target(spec, xp);
  for (std::size_t s = 0; s < 7; ++s)
    CHECK(Hp[s] == doctest::Approx(H[p[s]]).epsilon(1e-12));
}

TEST_CASE("ground_truth_graph hand-computed rows") {
  TargetSpec spec;
  spec.tau = 2;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = Expr::var(0) * Expr::var(1);  // u*v as a closed form
  spec.validate();
  Mat x(1, 2);
  x(0, 0) = 0.0;
  x(0, 1) = 1.0;
  auto g = ground_truth_graph(spec, x);
  CHECK(g.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g.matrix(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g.matrix(1, 0) == doctest::Approx(1.0 / (1.0 + M_E)).epsilon(1e-14));
  CHECK(g.matrix(1, 1) == doctest::Approx(M_E / (1.0 + M_E)).epsilon(1e-14));
}

TEST_CASE("ground_truth_graph is uniform for constant kernels and always stochastic") {
  TargetSpec spec;
  spec.tau = 4;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = Expr::constant(2.7);
  spec.validate();
  Rng rng(5);
  Mat x = random_input(rng, 1, 4);
  auto g = ground_truth_graph(spec, x);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t s = 0; s < 4; ++s) CHECK(g.matrix(t, s) == doctest::Approx(0.25).epsilon(1e-14));

  TargetSpec sweep = make_sweep_target(0.55, kRankInfinite, 6);
  for (int rep = 0; rep < 5; ++rep) {
    Mat xr = random_input(rng, 1, 6);
    auto gr = ground_truth_graph(sweep, xr);
    for (std::size_t t = 0; t < 6; ++t) {
      double row = 0.0;
      for (std::size_t s = 0; s < 6; ++s) {
        CHECK(gr.matrix(t, s) >= 0.0);
        row += gr.matrix(t, s);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rank structure is visible end to end") {
  // rank-3 kernel with linear F: truncating G at rank 3 changes nothing,
  // truncating at rank 2 changes the outputs
  TargetSpec spec;
  spec.tau = 5;
  spec.d = 1;
  spec.F = Expr::var(0) + Expr::constant(0.5) * Expr::var(1);
  spec.rho = {sigmoid(Expr::var(0)), sigmoid(-Expr::var(0))};
  spec.G = make_spectral_kernel(1.0, 3);
  spec.validate();

  TargetSpec same = spec;
  std::get<SpectralKernel>(same.G).sigma.resize(3);  // drop explicit zeros only
  TargetSpec lower = spec;
  std::get<SpectralKernel>(lower.G).sigma[2] = 0.0;  // rank 2

  Rng rng(31);
  double same_diff = 0.0, lower_diff = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Mat x = random_input(rng, 1, 5);
    auto a = eval_target(spec, x);
    auto b = eval_target(same, x);
    auto c = eval_target(lower, x);
    for (std::size_t t = 0; t < 5; ++t) {
      same_diff = std::max(same_diff, std::fabs(a[t] - b[t]));
      lower_diff = std::max(lower_diff, std::fabs(a[t] - c[t]));
    }
  }
  CHECK(same_diff < 1e-10);
  CHECK(lower_diff > 0.0);
}

TEST_CASE("complexity of the identity target") {
  TargetSpec spec;
  spec.tau = 4;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {Expr::constant(1.0)};
  spec.G = make_spectral_kernel(1.0, 1);
  auto rep = complexity_measures(spec, 1.0);
  CHECK(rep.K_F == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.sup_rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.C1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.sup_phi_psi == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("C1 equals one for exact power-law spectra") {
  TargetSpec spec;
  spec.tau = 4;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = make_spectral_kernel(1.0, kRankInfinite);
  auto rep = complexity_measures(spec, 1.0);
  CHECK(rep.C1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.spectrum_terms == kInfiniteRankTerms);
}

TEST_CASE("doubling F doubles K_F and C0") {
  TargetSpec spec = make_sweep_target(1.0, 4, 4);
  TargetSpec doubled = spec;
  doubled.F = Expr::constant(2.0) * spec.F;
  auto r1 = complexity_measures(spec, 1.0);
  auto r2 = complexity_measures(doubled, 1.0);
  CHECK(r2.K_F == doctest::Approx(2.0 * r1.K_F).epsilon(1e-10));
  CHECK(r2.C0 == doctest::Approx(2.0 * r1.C0).epsilon(1e-10));
}

TEST_CASE("C0 is consistent with its factors") {
  auto rep = complexity_measures(make_sweep_target(0.55, 6, 8), 0.55);
  const double prod = rep.K_F * rep.sup_rho;
  REQUIRE(prod > 0.0);
  const double expect = prod * std::max(rep.sup_phi_psi, 1.0 / prod);
  CHECK(rep.C0 == doctest::Approx(expect).epsilon(1e-10));
  CHECK(rep.C0 >= 0.0);
  CHECK(rep.C1 >= 0.0);
}

TEST_CASE("C1 scales linearly with the spectrum") {
  TargetSpec spec = make_sweep_target(0.7, 8, 4);
  TargetSpec scaled = spec;
  for (double& s : std::get<SpectralKernel>(scaled.G).sigma) s *= 3.0;
  auto r1 = complexity_measures(spec, 0.7);
  auto r2 = complexity_measures(scaled, 0.7);
  CHECK(r2.C1 == doctest::Approx(3.0 * r1.C1).epsilon(1e-12));
}

TEST_CASE("non-Lipschitz F is rejected") {
  TargetSpec spec;
  spec.tau = 2;
  spec.d = 1;
  spec.F = Expr::constant(1.0) / Expr::var(0);  // blows up at 0
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = make_spectral_kernel(1.0, 2);
  CHECK_THROWS_AS(complexity_measures(spec, 1.0), std::runtime_error);
}

TEST_CASE("complexity requires a spectral kernel") {
  TargetSpec spec;
  spec.tau = 2;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {sigmoid(Expr::var(0))};
  spec.G = Expr::constant(0.0);
  CHECK_THROWS_AS(complexity_measures(spec, 1.0), std::invalid_argument);
}

TEST_CASE("target spec json round trip preserves evaluation exactly") {
  TargetSpec spec = make_sweep_target(0.55, 6, 5, 99);
  nlohmann::json j = spec.to_json();
  TargetSpec back = TargetSpec::from_json(j);
  TargetSpec back2 = TargetSpec::from_json(nlohmann::json::parse(j.dump()));
  Rng rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    Mat x = random_input(rng, 1, 5);
    auto a = eval_target(spec, x);
    auto b = eval_target(back, x);
    auto c = eval_target(back2, x);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(a[t] == b[t]);
      CHECK(a[t] == c[t]);
    }
  }
}

TEST_CASE("target spec json rejects unknown keys and versions") {
  nlohmann::json j = make_sweep_target(1.0, 2, 3).to_json();
  nlohmann::json extra = j;
  extra["surprise"] = 1;
  CHECK_THROWS_AS(TargetSpec::from_json(extra), std::invalid_argument);
  nlohmann::json badver = j;
  badver["version"] = 7;
  CHECK_THROWS_AS(TargetSpec::from_json(badver), std::invalid_argument);
  nlohmann::json badg = j;
  badg["G"]["kind"] = "mystery";
  CHECK_THROWS_AS(TargetSpec::from_json(badg), std::invalid_argument);
}

TEST_CASE("rho leaving the unit interval is rejected") {
  TargetSpec spec;
  spec.tau = 3;
  spec.d = 1;
  spec.F = Expr::var(0);
  spec.rho = {Expr::constant(2.0) * sigmoid(Expr::var(0))};  // range up to ~2
  spec.G = make_spectral_kernel(1.0, 2);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_SUITE_END();
