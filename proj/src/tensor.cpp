#include "atrl/tensor.hpp"

#include <Eigen/Dense>

#include "atrl/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace atrl {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": bad shape " + shape_str(a.shape()));
}

void check_positive_dims(const Shape& s) {
  for (std::size_t d : s) {
    if (d == 0) throw std::invalid_argument("tensor shape has a zero dimension");
  }
}

thread_local Tape* g_active_tape = nullptr;

bool tracing(const Tensor& a) { return g_active_tape != nullptr && a.requires_grad(); }

void maybe_record(const char* op, std::vector<Tensor> inputs, Tensor& out,
                  std::function<void(TapeNode&)> backprop) {
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any || g_active_tape == nullptr) return;
  out.set_requires_grad(true);
  g_active_tape->record(TapeNode{op, std::move(inputs), out, std::move(backprop)});
}

void accumulate(Tensor& t, const double* g, std::size_t n) {
  if (!t.requires_grad()) return;
  auto& dst = t.grad();
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  check_positive_dims(shape);
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
  ensure_finite("tensor construction");
}

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_positive_dims(shape);
  s_ = std::make_shared<Storage>();
  s_->data.assign(shape_numel(shape), 0.0);
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.data(), t.data() + t.numel(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Rng& rng, Shape shape, double stddev, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  double* p = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i) p[i] = stddev * rng.normal();
  return t;
}

const Shape& Tensor::shape() const {
  if (!s_) throw std::runtime_error("use of undefined tensor");
  return s_->shape;
}

std::size_t Tensor::numel() const { return s_ ? s_->data.size() : 0; }

std::size_t Tensor::rows() const {
  if (ndim() != 2) shape_error("rows", *this);
  return s_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) shape_error("cols", *this);
  return s_->shape[1];
}

const double* Tensor::data() const {
  if (!s_) throw std::runtime_error("use of undefined tensor");
  return s_->data.data();
}

double* Tensor::data() {
  if (!s_) throw std::runtime_error("use of undefined tensor");
  return s_->data.data();
}

double Tensor::value() const {
  if (numel() != 1) throw std::invalid_argument("value(): tensor is not scalar, shape " + shape_str(shape()));
  return s_->data[0];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (!s_) throw std::runtime_error("use of undefined tensor");
  s_->requires_grad = v;
}

bool Tensor::has_grad() const { return s_ && !s_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  if (!s_) throw std::runtime_error("use of undefined tensor");
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!s_ || s_->grad.empty()) throw std::runtime_error("tensor has no gradient");
  return s_->grad;
}

void Tensor::zero_grad() {
  if (s_ && !s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  if (!s_) return true;
  for (double v : s_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::ensure_finite(const std::string& what) const {
  if (!all_finite()) throw NonFiniteError(what + ": non-finite value in tensor " + shape_str(shape()));
}

Tensor Tensor::detached_copy() const {
  if (!s_) return Tensor();
  return Tensor(s_->shape, s_->data, false);
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(TapeNode node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  backward(loss, {1.0});
}

void Tape::backward(const Tensor& out, const std::vector<double>& seed) {
  if (seed.size() != out.numel()) {
    throw std::invalid_argument("backward: seed size does not match output");
  }
  bool found = false;
  for (const TapeNode& n : nodes_) {
    if (n.output.id() == out.id()) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw std::invalid_argument("backward: tensor is detached from this tape");
  }
  Tensor out_mut = out;
  auto& g = out_mut.grad();
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backprop(*it);
  }
}

void Tape::zero_all_grads() {
  for (TapeNode& n : nodes_) {
    n.output.zero_grad();
    for (Tensor& t : n.inputs) t.zero_grad();
  }
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  MMap(out.data(), m, n).noalias() = CMap(a.data(), m, k) * CMap(b.data(), k, n);
  maybe_record("matmul", {a, b}, out, [m, k, n](TapeNode& nd) {
    CMap dc(nd.output.grad().data(), m, n);
    if (nd.inputs[0].requires_grad()) {
      EMat da = dc * CMap(nd.inputs[1].data(), k, n).transpose();
      accumulate(nd.inputs[0], da.data(), m * k);
    }
    if (nd.inputs[1].requires_grad()) {
      EMat db = CMap(nd.inputs[0].data(), m, k).transpose() * dc;
      accumulate(nd.inputs[1], db.data(), k * n);
    }
  });
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor out({m, n});
  MMap(out.data(), m, n).noalias() = CMap(a.data(), k, m).transpose() * CMap(b.data(), k, n);
  maybe_record("matmul_tn", {a, b}, out, [k, m, n](TapeNode& nd) {
    CMap dc(nd.output.grad().data(), m, n);
    if (nd.inputs[0].requires_grad()) {
      EMat da = CMap(nd.inputs[1].data(), k, n) * dc.transpose();
      accumulate(nd.inputs[0], da.data(), k * m);
    }
    if (nd.inputs[1].requires_grad()) {
      EMat db = CMap(nd.inputs[0].data(), k, m) * dc;
      accumulate(nd.inputs[1], db.data(), k * n);
    }
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  MMap(out.data(), m, n).noalias() = CMap(a.data(), m, k) * CMap(b.data(), n, k).transpose();
  maybe_record("matmul_nt", {a, b}, out, [m, k, n](TapeNode& nd) {
    CMap dc(nd.output.grad().data(), m, n);
    if (nd.inputs[0].requires_grad()) {
      EMat da = dc * CMap(nd.inputs[1].data(), n, k);
      accumulate(nd.inputs[0], da.data(), m * k);
    }
    if (nd.inputs[1].requires_grad()) {
      EMat db = dc.transpose() * CMap(nd.inputs[0].data(), m, k);
      accumulate(nd.inputs[1], db.data(), n * k);
    }
  });
  return out;
}

namespace {

Tensor elementwise2(const char* op, const Tensor& a, const Tensor& b,
                    double (*fwd)(double, double),
                    std::function<void(TapeNode&)> backprop) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  maybe_record(op, {a, b}, out, std::move(backprop));
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise2("add", a, b, [](double x, double y) { return x + y; },
                      [](TapeNode& nd) {
                        const auto& g = nd.output.grad();
                        accumulate(nd.inputs[0], g.data(), g.size());
                        accumulate(nd.inputs[1], g.data(), g.size());
                      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise2("sub", a, b, [](double x, double y) { return x - y; },
                      [](TapeNode& nd) {
                        const auto& g = nd.output.grad();
                        accumulate(nd.inputs[0], g.data(), g.size());
                        if (nd.inputs[1].requires_grad()) {
                          auto& dst = nd.inputs[1].grad();
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
                        }
                      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise2("mul", a, b, [](double x, double y) { return x * y; },
                      [](TapeNode& nd) {
                        const auto& g = nd.output.grad();
                        const std::size_t n = g.size();
                        if (nd.inputs[0].requires_grad()) {
                          auto& da = nd.inputs[0].grad();
                          const double* pb = nd.inputs[1].data();
                          for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * pb[i];
                        }
                        if (nd.inputs[1].requires_grad()) {
                          auto& db = nd.inputs[1].grad();
                          const double* pa = nd.inputs[0].data();
                          for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * pa[i];
                        }
                      });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) po[i] = c * pa[i];
  maybe_record("scale", {a}, out, [c](TapeNode& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const auto& g = nd.output.grad();
    auto& da = nd.inputs[0].grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
  });
  return out;
}

Tensor add_bias_col(const Tensor& m, const Tensor& bias) {
  if (m.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != m.rows()) shape_error("add_bias_col", m, bias);
  const std::size_t r = m.rows(), c = m.cols();
  Tensor out({r, c});
  const double* pm = m.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) po[i * c + j] = pm[i * c + j] + pb[i];
  maybe_record("add_bias_col", {m, bias}, out, [r, c](TapeNode& nd) {
    const auto& g = nd.output.grad();
    accumulate(nd.inputs[0], g.data(), g.size());
    if (nd.inputs[1].requires_grad()) {
      auto& db = nd.inputs[1].grad();
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += g[i * c + j];
        db[i] += s;
      }
    }
  });
  return out;
}

namespace {

// Softmax over contiguous slices of length `len`, `count` of them, with
// element stride `stride` inside a slice and slice stride `slice_stride`.
void softmax_slices(const double* in, double* out, std::size_t count, std::size_t len,
                    std::size_t slice_stride, std::size_t stride) {
  for (std::size_t s = 0; s < count; ++s)
    softmax_strided(in + s * slice_stride, out + s * slice_stride, len, stride);
}

}  // namespace

Tensor softmax(const Tensor& t, std::size_t axis) {
  if (t.ndim() != 1 && t.ndim() != 2) shape_error("softmax", t);
  if (axis >= t.ndim()) throw std::invalid_argument("softmax: axis out of range for shape " + shape_str(t.shape()));
  Tensor out(t.shape());
  std::size_t count, len, slice_stride, stride;
  if (t.ndim() == 1) {
    count = 1, len = t.dim(0), slice_stride = 0, stride = 1;
  } else if (axis == 1) {  // normalize along columns index: each row sums to 1
    count = t.rows(), len = t.cols(), slice_stride = t.cols(), stride = 1;
  } else {  // each column sums to 1
    count = t.cols(), len = t.rows(), slice_stride = 1, stride = t.cols();
  }
  softmax_slices(t.data(), out.data(), count, len, slice_stride, stride);
  maybe_record("softmax", {t}, out, [count, len, slice_stride, stride](TapeNode& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const auto& g = nd.output.grad();
    const double* y = nd.output.data();
    auto& dx = nd.inputs[0].grad();
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t base = s * slice_stride;
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += g[base + i * stride] * y[base + i * stride];
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = base + i * stride;
        dx[k] += (g[k] - dot) * y[k];
      }
    }
  });
  return out;
}

Tensor sum_axis(const Tensor& t, std::size_t axis) {
  if (t.ndim() != 2 || axis > 1) shape_error("sum_axis", t);
  const std::size_t r = t.rows(), c = t.cols();
  const std::size_t out_len = (axis == 0) ? c : r;
  Tensor out({out_len});
  const double* p = t.data();
  double* po = out.data();
  std::fill(po, po + out_len, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) po[axis == 0 ? j : i] += p[i * c + j];
  maybe_record("sum_axis", {t}, out, [r, c, axis](TapeNode& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const auto& g = nd.output.grad();
    auto& dx = nd.inputs[0].grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[axis == 0 ? j : i];
  });
  return out;
}

Tensor hcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: needs at least one input");
  const std::size_t r = parts[0].ndim() == 2 ? parts[0].rows() : 0;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != 2 || p.rows() != r) shape_error("hcat", p);
    total += p.cols();
  }
  Tensor out({r, total});
  double* po = out.data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.data() + i * c, p.data() + (i + 1) * c, po + i * total + off);
    off += c;
  }
  maybe_record("hcat", parts, out, [r, total](TapeNode& nd) {
    const auto& g = nd.output.grad();
    std::size_t off = 0;
    for (Tensor& p : nd.inputs) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        auto& dx = p.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[i * total + off + j];
      }
      off += c;
    }
  });
  return out;
}

Tensor sum_all(const Tensor& t) {
  double s = 0.0;
  const double* p = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i) s += p[i];
  Tensor out({1}, std::vector<double>{s});
  maybe_record("sum_all", {t}, out, [](TapeNode& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const double g = nd.output.grad()[0];
    auto& dx = nd.inputs[0].grad();
    for (double& v : dx) v += g;
  });
  return out;
}

namespace {

Tensor pointwise(const char* op, const Tensor& t, double (*fwd)(double),
                 double (*dydx_from_y)(double)) {
  Tensor out(t.shape());
  const double* p = t.data();
  double* po = out.data();
  for (std::size_t i = 0; i < t.numel(); ++i) po[i] = fwd(p[i]);
  maybe_record(op, {t}, out, [dydx_from_y](TapeNode& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const auto& g = nd.output.grad();
    const double* y = nd.output.data();
    auto& dx = nd.inputs[0].grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * dydx_from_y(y[i]);
  });
  return out;
}

}  // namespace

Tensor sigmoid(const Tensor& t) {
  return pointwise("sigmoid", t,
                   [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
                   [](double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& t) {
  return pointwise("relu", t, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) shape_error("mse", pred, target);
  Tensor d = sub(pred, target);
  Tensor sq = mul(d, d);
  return scale(sum_all(sq), 1.0 / static_cast<double>(pred.numel()));
}

// ---- gradient checking ----------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  const std::size_t n_in = x.numel();

  Tensor xg = x.detached_copy();
  xg.set_requires_grad(true);

  Tape tape;
  Tensor y = f(xg);
  y.ensure_finite("grad_check forward");
  const std::size_t n_out = y.numel();

  // Analytic Jacobian, one reverse pass per output coordinate.
  std::vector<double> ja(n_out * n_in, 0.0);
  std::vector<double> seed(n_out, 0.0);
  for (std::size_t j = 0; j < n_out; ++j) {
    tape.zero_all_grads();
    seed.assign(n_out, 0.0);
    seed[j] = 1.0;
    tape.backward(y, seed);
    const auto& g = xg.grad();
    for (std::size_t i = 0; i < n_in; ++i) ja[j * n_in + i] = g[i];
  }

  // Numeric Jacobian by central differences, outside any tape.
  std::vector<double> jn(n_out * n_in, 0.0);
  {
    Tensor xp = x.detached_copy();
    for (std::size_t i = 0; i < n_in; ++i) {
      const double orig = xp.data()[i];
      xp.data()[i] = orig + step;
      Tensor yp = f(xp);
      xp.data()[i] = orig - step;
      Tensor ym = f(xp);
      xp.data()[i] = orig;
      if (yp.numel() != n_out || ym.numel() != n_out) {
        throw std::runtime_error("grad_check: function output size changed");
      }
      for (std::size_t j = 0; j < n_out; ++j) {
        const double v = (yp.data()[j] - ym.data()[j]) / (2.0 * step);
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite numeric derivative");
        jn[j * n_in + i] = v;
      }
    }
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < ja.size(); ++k) {
    if (!std::isfinite(ja[k])) throw std::runtime_error("grad_check: non-finite analytic derivative");
    const double err = std::abs(ja[k] - jn[k]) / std::max(1.0, std::abs(jn[k]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace atrl
