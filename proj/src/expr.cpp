#include "atrl/expr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace atrl {

struct Expr::Node {
  enum class Op { kConst, kVar, kAdd, kSub, kMul, kDiv, kNeg, kSigmoid, kSin, kCos, kExp, kTanh };
  Op op;
  double value = 0.0;
  std::size_t index = 0;
  std::shared_ptr<const Node> a, b;
};

namespace {

using Node = Expr::Node;
using Op = Node::Op;

std::shared_ptr<const Node> leaf_const(double c) {
  auto n = std::make_shared<Node>();
  n->op = Op::kConst;
  n->value = c;
  return n;
}

std::shared_ptr<const Node> unary(Op op, std::shared_ptr<const Node> a) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

std::shared_ptr<const Node> binary(Op op, std::shared_ptr<const Node> a,
                                   std::shared_ptr<const Node> b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double eval_node(const Node& n, const double* u, std::size_t len) {
  switch (n.op) {
    case Op::kConst: return n.value;
    case Op::kVar:
      if (n.index >= len)
        throw std::invalid_argument("expr: variable u" + std::to_string(n.index) +
                                    " out of range for input of length " + std::to_string(len));
      return u[n.index];
    case Op::kAdd: return eval_node(*n.a, u, len) + eval_node(*n.b, u, len);
    case Op::kSub: return eval_node(*n.a, u, len) - eval_node(*n.b, u, len);
    case Op::kMul: return eval_node(*n.a, u, len) * eval_node(*n.b, u, len);
    case Op::kDiv: return eval_node(*n.a, u, len) / eval_node(*n.b, u, len);
    case Op::kNeg: return -eval_node(*n.a, u, len);
    case Op::kSigmoid: return stable_sigmoid(eval_node(*n.a, u, len));
    case Op::kSin: return std::sin(eval_node(*n.a, u, len));
    case Op::kCos: return std::cos(eval_node(*n.a, u, len));
    case Op::kExp: return std::exp(eval_node(*n.a, u, len));
    case Op::kTanh: return std::tanh(eval_node(*n.a, u, len));
  }
  throw std::logic_error("expr: unknown op");
}

std::size_t arity_node(const Node& n) {
  switch (n.op) {
    case Op::kConst: return 0;
    case Op::kVar: return n.index + 1;
    default: {
      std::size_t r = n.a ? arity_node(*n.a) : 0;
      if (n.b) r = std::max(r, arity_node(*n.b));
      return r;
    }
  }
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kVar: return "var";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kExp: return "exp";
    case Op::kTanh: return "tanh";
  }
  return "?";
}

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (!j.contains(k))
      throw std::invalid_argument(std::string("expr: missing key \"") + k + "\"");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || (it.key() == k);
    if (!known) throw std::invalid_argument("expr: unknown key \"" + it.key() + "\"");
  }
}

}  // namespace

Expr::Expr() : root_(leaf_const(0.0)) {}

Expr Expr::constant(double c) { return Expr(leaf_const(c)); }

Expr Expr::var(std::size_t index) {
  auto n = std::make_shared<Node>();
  n->op = Op::kVar;
  n->index = index;
  return Expr(std::move(n));
}

double Expr::eval(const double* u, std::size_t n) const { return eval_node(*root_, u, n); }

std::size_t Expr::arity() const { return arity_node(*root_); }

Expr operator+(const Expr& a, const Expr& b) { return Expr(binary(Op::kAdd, a.root(), b.root())); }
Expr operator-(const Expr& a, const Expr& b) { return Expr(binary(Op::kSub, a.root(), b.root())); }
Expr operator*(const Expr& a, const Expr& b) { return Expr(binary(Op::kMul, a.root(), b.root())); }
Expr operator/(const Expr& a, const Expr& b) { return Expr(binary(Op::kDiv, a.root(), b.root())); }
Expr operator-(const Expr& a) { return Expr(unary(Op::kNeg, a.root())); }

Expr sigmoid(const Expr& a) { return Expr(unary(Op::kSigmoid, a.root())); }
Expr sin(const Expr& a) { return Expr(unary(Op::kSin, a.root())); }
Expr cos(const Expr& a) { return Expr(unary(Op::kCos, a.root())); }
Expr exp(const Expr& a) { return Expr(unary(Op::kExp, a.root())); }
Expr tanh(const Expr& a) { return Expr(unary(Op::kTanh, a.root())); }

Expr Expr::derivative(std::size_t v) const {
  const Node& n = *root_;
  const Expr zero = Expr::constant(0.0);
  switch (n.op) {
    case Op::kConst: return zero;
    case Op::kVar: return (n.index == v) ? Expr::constant(1.0) : zero;
    case Op::kAdd: return Expr(n.a).derivative(v) + Expr(n.b).derivative(v);
    case Op::kSub: return Expr(n.a).derivative(v) - Expr(n.b).derivative(v);
    case Op::kMul:
      return Expr(n.a).derivative(v) * Expr(n.b) + Expr(n.a) * Expr(n.b).derivative(v);
    case Op::kDiv:
      return (Expr(n.a).derivative(v) * Expr(n.b) - Expr(n.a) * Expr(n.b).derivative(v)) /
             (Expr(n.b) * Expr(n.b));
    case Op::kNeg: return -Expr(n.a).derivative(v);
    case Op::kSigmoid: {
      Expr s = sigmoid(Expr(n.a));
      return s * (Expr::constant(1.0) - s) * Expr(n.a).derivative(v);
    }
    case Op::kSin: return cos(Expr(n.a)) * Expr(n.a).derivative(v);
    case Op::kCos: return -sin(Expr(n.a)) * Expr(n.a).derivative(v);
    case Op::kExp: return exp(Expr(n.a)) * Expr(n.a).derivative(v);
    case Op::kTanh: {
      Expr t = tanh(Expr(n.a));
      return (Expr::constant(1.0) - t * t) * Expr(n.a).derivative(v);
    }
  }
  throw std::logic_error("expr: unknown op");
}

nlohmann::json Expr::to_json() const {
  const Node& n = *root_;
  nlohmann::json j;
  j["op"] = op_name(n.op);
  switch (n.op) {
    case Op::kConst: j["value"] = n.value; break;
    case Op::kVar: j["index"] = n.index; break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
      j["lhs"] = Expr(n.a).to_json();
      j["rhs"] = Expr(n.b).to_json();
      break;
    default: j["arg"] = Expr(n.a).to_json(); break;
  }
  return j;
}

Expr Expr::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
    throw std::invalid_argument("expr: node must be an object with an \"op\" string");
  const std::string op = j["op"].get<std::string>();
  if (op == "const") {
    require_keys(j, {"op", "value"});
    if (!j["value"].is_number()) throw std::invalid_argument("expr: const value must be a number");
    return Expr::constant(j["value"].get<double>());
  }
  if (op == "var") {
    require_keys(j, {"op", "index"});
    if (!j["index"].is_number_unsigned()) throw std::invalid_argument("expr: var index must be unsigned");
    return Expr::var(j["index"].get<std::size_t>());
  }
  if (op == "add" || op == "sub" || op == "mul" || op == "div") {
    require_keys(j, {"op", "lhs", "rhs"});
    Expr a = from_json(j["lhs"]), b = from_json(j["rhs"]);
    if (op == "add") return a + b;
    if (op == "sub") return a - b;
    if (op == "mul") return a * b;
    return a / b;
  }
  if (op == "neg" || op == "sigmoid" || op == "sin" || op == "cos" || op == "exp" || op == "tanh") {
    require_keys(j, {"op", "arg"});
    Expr a = from_json(j["arg"]);
    if (op == "neg") return -a;
    if (op == "sigmoid") return sigmoid(a);
    if (op == "sin") return sin(a);
    if (op == "cos") return cos(a);
    if (op == "exp") return exp(a);
    return tanh(a);
  }
  throw std::invalid_argument("expr: unknown op \"" + op + "\"");
}

}  // namespace atrl
