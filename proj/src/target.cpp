#include "atrl/target.hpp"

#include <cmath>
#include <stdexcept>

#include "atrl/numeric.hpp"
#include "atrl/rng.hpp"

namespace atrl {

namespace {

constexpr std::size_t kSupSamples = 10000;
constexpr double kGradBlowup = 1e10;

// Deterministic sample points in [0,1]^dim: inclusive uniform grid in 1-D,
// Kronecker lattice (fractional parts of i*sqrt(prime)) in higher dimension,
// with the box corners appended so suprema attained at extremes are not missed.
std::vector<std::vector<double>> sample_points(std::size_t count, std::size_t dim) {
  std::vector<std::vector<double>> pts;
  if (dim == 1) {
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
      pts.push_back({static_cast<double>(i) / static_cast<double>(count - 1)});
    return pts;
  }
  static const double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > std::size(primes))
    throw std::invalid_argument("sample_points: dimension too large");
  std::vector<double> step(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double s = std::sqrt(primes[j]);
    step[j] = s - std::floor(s);
  }
  pts.reserve(count + (dim <= 12 ? (std::size_t{1} << dim) : 0));
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> p(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.5 + static_cast<double>(i + 1) * step[j];
      p[j] = v - std::floor(v);
    }
    pts.push_back(std::move(p));
  }
  for (std::size_t mask = 0; mask < (std::size_t{1} << dim); ++mask) {
    std::vector<double> p(dim);
    for (std::size_t j = 0; j < dim; ++j) p[j] = (mask >> j) & 1 ? 1.0 : 0.0;
    pts.push_back(std::move(p));
  }
  return pts;
}

std::vector<double> spectrum(double alpha, std::size_t r, bool allow_low_alpha) {
  if (!(alpha > 0.5) && !allow_low_alpha)
    throw std::invalid_argument("spectral G: decay exponent must exceed 1/2 (got " +
                                std::to_string(alpha) + "); pass the override to proceed anyway");
  if (r == 0) throw std::invalid_argument("spectral G: rank must be >= 1");
  std::vector<double> sig(kInfiniteRankTerms, 0.0);
  const std::size_t top = std::min(r, kInfiniteRankTerms);
  for (std::size_t k = 1; k <= top; ++k)
    sig[k - 1] = std::pow(static_cast<double>(k), -alpha);
  return sig;
}

double max_grad_norm(const Expr& F, std::size_t dim, std::size_t samples) {
  std::vector<Expr> partials;
  partials.reserve(dim);
  for (std::size_t j = 0; j < dim; ++j) partials.push_back(F.derivative(j));
  double worst = 0.0;
  for (const auto& p : sample_points(samples, dim)) {
    double g2 = 0.0;
    for (const auto& dF : partials) {
      const double g = dF.eval(p.data(), p.size());
      g2 += g * g;
    }
    const double gn = std::sqrt(g2);
    if (!std::isfinite(gn) || gn > kGradBlowup)
      throw std::runtime_error("complexity: gradient of F blows up on the sample grid");
    worst = std::max(worst, gn);
  }
  return worst;
}

}  // namespace

double SpectralKernel::basis_fn(std::size_t k, double u) const {
  if (basis == "cosine") return std::sqrt(2.0) * std::cos(static_cast<double>(k) * M_PI * u);
  throw std::invalid_argument("spectral kernel: unknown basis \"" + basis + "\"");
}

double SpectralKernel::operator()(double u, double v) const {
  double s = 0.0;
  for (std::size_t k = 1; k <= sigma.size(); ++k) {
    const double sk = sigma[k - 1];
    if (sk != 0.0) s += sk * basis_fn(k, u) * basis_fn(k, v);
  }
  return s;
}

double TargetSpec::kernel(const double* xu, const double* xv) const {
  if (const auto* sk = std::get_if<SpectralKernel>(&G)) {
    if (d != 1)
      throw std::invalid_argument("target: spectral kernels are one-dimensional, spec has d = " +
                                  std::to_string(d));
    return (*sk)(xu[0], xv[0]);
  }
  const Expr& g = std::get<Expr>(G);
  std::vector<double> uv(2 * d);
  for (std::size_t i = 0; i < d; ++i) uv[i] = xu[i];
  for (std::size_t i = 0; i < d; ++i) uv[d + i] = xv[i];
  return g.eval(uv.data(), uv.size());
}

void TargetSpec::validate() const {
  if (tau == 0 || d == 0) throw std::invalid_argument("target: tau and d must be positive");
  if (rho.empty()) throw std::invalid_argument("target: rho must have at least one component");
  for (const auto& r : rho)
    if (r.arity() > d)
      throw std::invalid_argument("target: rho component reads beyond input dimension");
  if (F.arity() > n_rho())
    throw std::invalid_argument("target: F reads beyond rho dimension");
  if (const auto* sk = std::get_if<SpectralKernel>(&G)) {
    if (d != 1) throw std::invalid_argument("target: spectral G requires d = 1");
    if (sk->basis != "cosine")
      throw std::invalid_argument("target: unknown basis \"" + sk->basis + "\"");
    for (double s : sk->sigma)
      if (!(s >= 0.0)) throw std::invalid_argument("target: spectrum must be nonnegative");
  } else {
    if (std::get<Expr>(G).arity() > 2 * d)
      throw std::invalid_argument("target: closed-form G reads beyond its 2d arguments");
  }
  // sampled range check for rho, finite-gradient check for F
  for (const auto& p : sample_points(512, d)) {
    for (std::size_t j = 0; j < n_rho(); ++j) {
      const double v = rho[j].eval(p.data(), p.size());
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("target: rho component " + std::to_string(j) +
                                    " leaves [0,1] (value " + std::to_string(v) + ")");
    }
  }
  (void)max_grad_norm(F, n_rho(), 256);
}

SpectralFactorization make_spectral_G(double alpha, std::size_t r, const std::string& basis,
                                      const QuadratureGrid& grid, bool allow_low_alpha) {
  SpectralKernel ker{spectrum(alpha, r, allow_low_alpha), basis};
  grid.validate();
  const std::size_t n = grid.size();
  SpectralFactorization f;
  f.sigma = ker.sigma;
  f.grid = grid;
  f.left = Mat(n, f.sigma.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 1; k <= f.sigma.size(); ++k)
      f.left(i, k - 1) = ker.basis_fn(k, grid.points[i]);
  f.right = f.left;
  return f;
}

SpectralKernel make_spectral_kernel(double alpha, std::size_t r, const std::string& basis,
                                    bool allow_low_alpha) {
  if (basis != "cosine") throw std::invalid_argument("spectral kernel: unknown basis \"" + basis + "\"");
  return SpectralKernel{spectrum(alpha, r, allow_low_alpha), basis};
}

std::vector<double> eval_target(const TargetSpec& spec, const Mat& x) {
  if (x.rows != spec.d || x.cols != spec.tau)
    throw std::invalid_argument("eval_target: input is (" + std::to_string(x.rows) + "," +
                                std::to_string(x.cols) + "), spec wants (" + std::to_string(spec.d) +
                                "," + std::to_string(spec.tau) + ")");
  for (double v : x.a)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("eval_target: input leaves [0,1] (value " + std::to_string(v) + ")");

  const std::size_t tau = spec.tau, d = spec.d, nr = spec.n_rho();
  std::vector<std::vector<double>> cols(tau, std::vector<double>(d));
  for (std::size_t s = 0; s < tau; ++s)
    for (std::size_t i = 0; i < d; ++i) cols[s][i] = x(i, s);

  std::vector<std::vector<double>> rho_vals(tau, std::vector<double>(nr));
  for (std::size_t s = 0; s < tau; ++s)
    for (std::size_t j = 0; j < nr; ++j) rho_vals[s][j] = spec.rho[j].eval(cols[s].data(), d);

  std::vector<double> out(tau), scores(tau), pooled(nr);
  for (std::size_t t = 0; t < tau; ++t) {
    for (std::size_t s = 0; s < tau; ++s) scores[s] = spec.kernel(cols[t].data(), cols[s].data());
    softmax_strided(scores.data(), scores.data(), tau, 1);
    std::fill(pooled.begin(), pooled.end(), 0.0);
    for (std::size_t s = 0; s < tau; ++s)
      for (std::size_t j = 0; j < nr; ++j) pooled[j] += scores[s] * rho_vals[s][j];
    out[t] = spec.F.eval(pooled.data(), nr);
  }
  return out;
}

AttentionGraph ground_truth_graph(const TargetSpec& spec, const Mat& x) {
  if (x.rows != spec.d || x.cols != spec.tau)
    throw std::invalid_argument("ground_truth_graph: input shape mismatch");
  for (double v : x.a)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("ground_truth_graph: input leaves [0,1]");
  const std::size_t tau = spec.tau, d = spec.d;
  std::vector<std::vector<double>> cols(tau, std::vector<double>(d));
  for (std::size_t s = 0; s < tau; ++s)
    for (std::size_t i = 0; i < d; ++i) cols[s][i] = x(i, s);
  AttentionGraph g{Mat(tau, tau)};
  for (std::size_t t = 0; t < tau; ++t) {
    for (std::size_t s = 0; s < tau; ++s)
      g.matrix(t, s) = spec.kernel(cols[t].data(), cols[s].data());
    softmax_strided(&g.matrix(t, 0), &g.matrix(t, 0), tau, 1);
  }
  return g;
}

ComplexityReport complexity_measures(const TargetSpec& spec, double alpha) {
  spec.validate();
  if (!spec.has_spectral_G())
    throw std::invalid_argument("complexity_measures: spec must carry a spectral G");
  const auto& ker = std::get<SpectralKernel>(spec.G);

  ComplexityReport rep;
  rep.alpha = alpha;
  rep.spectrum_terms = ker.sigma.size();
  rep.K_F = max_grad_norm(spec.F, spec.n_rho(), kSupSamples);

  for (const auto& p : sample_points(kSupSamples, spec.d))
    for (const auto& r : spec.rho)
      rep.sup_rho = std::max(rep.sup_rho, std::fabs(r.eval(p.data(), p.size())));

  const auto grid1d = sample_points(kSupSamples, 1);
  for (std::size_t k = 1; k <= ker.sigma.size(); ++k) {
    if (ker.sigma[k - 1] == 0.0) continue;
    double sup_b = 0.0;
    for (const auto& p : grid1d) sup_b = std::max(sup_b, std::fabs(ker.basis_fn(k, p[0])));
    rep.sup_phi_psi = std::max(rep.sup_phi_psi, 2.0 * sup_b);  // phi_k and psi_k coincide
  }

  for (std::size_t k = 1; k <= ker.sigma.size(); ++k)
    rep.C1 = std::max(rep.C1, ker.sigma[k - 1] * std::pow(static_cast<double>(k), alpha));

  // K_F*sup_rho*max(sup_phi_psi, 1/(K_F*sup_rho)), written to survive K_F = 0
  rep.C0 = std::max(rep.K_F * rep.sup_rho * rep.sup_phi_psi, 1.0);
  return rep;
}

TargetSpec make_sweep_target(double alpha, std::size_t r, std::size_t tau, std::uint64_t seed) {
  Rng rng(seed);
  TargetSpec spec;
  spec.tau = tau;
  spec.d = 1;
  const std::size_t n_rho = 4;

  Expr F = Expr::constant(0.0);
  for (std::size_t j = 0; j < n_rho; ++j) {
    const double a = rng.uniform(0.5, 1.5);
    const double b = rng.uniform(1.0, 3.0);
    const double c = rng.uniform(-1.5, 1.5);
    F = F + Expr::constant(a) *
                sigmoid(Expr::constant(b) * Expr::var(j) + Expr::constant(c));
  }
  spec.F = F;

  for (std::size_t j = 0; j < n_rho; ++j) {
    const double w = rng.uniform(-4.0, 4.0);
    const double b = rng.uniform(-2.0, 2.0);
    spec.rho.push_back(sigmoid(Expr::constant(w) * Expr::var(0) + Expr::constant(b)));
  }

  spec.G = make_spectral_kernel(alpha, r);
  spec.validate();
  return spec;
}

nlohmann::json TargetSpec::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["tau"] = tau;
  j["d"] = d;
  j["F"] = F.to_json();
  nlohmann::json jr = nlohmann::json::array();
  for (const auto& r : rho) jr.push_back(r.to_json());
  j["rho"] = std::move(jr);
  if (const auto* sk = std::get_if<SpectralKernel>(&G)) {
    j["G"] = {{"kind", "spectral"}, {"basis", sk->basis}, {"sigma", sk->sigma}};
  } else {
    j["G"] = {{"kind", "closed"}, {"expr", std::get<Expr>(G).to_json()}};
  }
  return j;
}

namespace {

void require_exact_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const char* what) {
  for (const char* k : keys)
    if (!j.contains(k))
      throw std::invalid_argument(std::string(what) + ": missing key \"" + k + "\"");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || (it.key() == k);
    if (!known)
      throw std::invalid_argument(std::string(what) + ": unknown key \"" + it.key() + "\"");
  }
}

}  // namespace

TargetSpec TargetSpec::from_json(const nlohmann::json& j) {
  require_exact_keys(j, {"version", "tau", "d", "F", "rho", "G"}, "target spec");
  if (!j["version"].is_number_integer() || j["version"].get<std::int64_t>() != 1)
    throw std::invalid_argument("target spec: unsupported version");
  TargetSpec spec;
  spec.tau = j["tau"].get<std::size_t>();
  spec.d = j["d"].get<std::size_t>();
  spec.F = Expr::from_json(j["F"]);
  if (!j["rho"].is_array()) throw std::invalid_argument("target spec: rho must be an array");
  for (const auto& e : j["rho"]) spec.rho.push_back(Expr::from_json(e));
  const auto& g = j["G"];
  if (!g.is_object() || !g.contains("kind"))
    throw std::invalid_argument("target spec: G must be an object with \"kind\"");
  const std::string kind = g["kind"].get<std::string>();
  if (kind == "spectral") {
    require_exact_keys(g, {"kind", "basis", "sigma"}, "target spec G");
    SpectralKernel sk;
    sk.basis = g["basis"].get<std::string>();
    sk.sigma = g["sigma"].get<std::vector<double>>();
    spec.G = std::move(sk);
  } else if (kind == "closed") {
    require_exact_keys(g, {"kind", "expr"}, "target spec G");
    spec.G = Expr::from_json(g["expr"]);
  } else {
    throw std::invalid_argument("target spec: unknown G kind \"" + kind + "\"");
  }
  spec.validate();
  return spec;
}

}  // namespace atrl
