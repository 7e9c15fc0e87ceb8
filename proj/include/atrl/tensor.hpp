#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrl/rng.hpp"

namespace atrl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Raised when a value buffer picks up an inf or nan. Training loops catch
// this to distinguish numeric blow-up from genuine misuse.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major 64-bit float tensor. The value buffer is treated as
// immutable once the tensor participates in a forward pass; only the grad
// buffer is written afterwards. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(Shape shape, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Rng& rng, Shape shape, double stddev, bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t k) const { return shape().at(k); }
  std::size_t numel() const;
  std::size_t rows() const;  // 2-d only
  std::size_t cols() const;  // 2-d only

  const double* data() const;
  double* data();  // parameter updates and initialization only
  double value() const;  // scalar tensors
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t i, std::size_t j) const { return data()[i * cols() + j]; }

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool has_grad() const;
  std::vector<double>& grad();              // allocates on first use
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();

  bool all_finite() const;
  void ensure_finite(const std::string& what) const;

  Tensor detached_copy() const;

  // Storage identity, used by the tape to match nodes.
  const void* id() const { return s_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation
  };
  std::shared_ptr<Storage> s_;
};

// One recorded primitive application.
struct TapeNode {
  const char* op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(TapeNode&)> backprop;
};

// Records primitive applications of one forward pass, in execution order.
// A tape is confined to the thread that constructed it; constructing one
// makes it the active tape for that thread until destruction.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(TapeNode node);
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss produced under this tape. Seeds the
  // loss gradient with 1 and accumulates d(loss)/d(leaf) into every
  // requires_grad leaf.
  void backward(const Tensor& loss);

  // Vector-Jacobian product: seeds d(out) with the given cotangent.
  void backward(const Tensor& out, const std::vector<double>& seed);

  // Clears grads of every tensor seen by this tape (leaves and
  // intermediates), so the tape can run another backward pass.
  void zero_all_grads();

 private:
  std::vector<TapeNode> nodes_;
  Tape* prev_ = nullptr;
};

// ---- primitives -----------------------------------------------------------
// Each primitive validates shapes, computes the forward value, and records a
// node on the active tape when any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n) -> (m,n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b: (k,m)x(k,n) -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T: (m,k)x(n,k) -> (m,n)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_bias_col(const Tensor& m, const Tensor& bias);  // (r,c) + (r) per column
Tensor softmax(const Tensor& t, std::size_t axis);  // sums to 1 along `axis`
Tensor sum_axis(const Tensor& t, std::size_t axis);  // 2-d -> 1-d
Tensor sum_all(const Tensor& t);                     // -> scalar
Tensor hcat(const std::vector<Tensor>& parts);       // concat 2-d blocks along columns
Tensor sigmoid(const Tensor& t);
Tensor relu(const Tensor& t);

Tensor mse(const Tensor& pred, const Tensor& target);  // mean squared error

// ---- gradient checking ----------------------------------------------------

// Max over Jacobian entries of |analytic - numeric| / max(1, |numeric|),
// numeric by central differences with the given step. `f` must be
// deterministic; it is re-run once per output coordinate for the analytic
// Jacobian and twice per input coordinate for the numeric one.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-6);

}  // namespace atrl
