#pragma once

// Closed-form scalar expressions over a vector argument u[0..k-1]: enough to
// state target functions in config files, evaluate them exactly, and take
// symbolic partial derivatives for Lipschitz estimates.

#include <cstddef>
#include <memory>
#include <vector>

#include "json.hpp"

namespace atrl {

class Expr {
 public:
  Expr();  // the constant 0

  static Expr constant(double c);
  static Expr var(std::size_t index);

  double eval(const double* u, std::size_t n) const;
  double operator()(const std::vector<double>& u) const { return eval(u.data(), u.size()); }

  // 1 + highest variable index referenced (0 for pure constants).
  std::size_t arity() const;

  Expr derivative(std::size_t var) const;

  nlohmann::json to_json() const;
  static Expr from_json(const nlohmann::json& j);

  struct Node;
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  const std::shared_ptr<const Node>& root() const { return root_; }

 private:
  std::shared_ptr<const Node> root_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

Expr sigmoid(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr tanh(const Expr& a);

}  // namespace atrl
