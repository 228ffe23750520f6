#include "execlab/autodiff.hpp"

#include <array>
#include <cmath>
#include <string>

#include "execlab/errors.hpp"

namespace execlab::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "const";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::tanh: return "tanh";
    case Op::sqrt: return "sqrt";
    case Op::pow: return "pow";
    case Op::abs_pow: return "abs_pow";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
  }
  return "?";
}

double abs_pow(double x, double p) { return std::pow(std::fabs(x), p); }

double Gradient::operator[](Var v) const {
  const auto i = static_cast<std::size_t>(v.index());
  return i < adjoint_.size() ? adjoint_[i] : 0.0;
}

Tape::Tape() { nodes_.push_back(Node{0.0, 0.0, 0.0, 0, 0, Op::constant}); }

void Tape::clear() { nodes_.resize(1); }

Var Tape::push(Op op, double value, std::int32_t a, double da, std::int32_t b, double db) {
  if (!std::isfinite(value) || !std::isfinite(da) || !std::isfinite(db)) {
    throw NumericError("non-finite result at tape node " + std::to_string(nodes_.size()) + " (" +
                       std::string(op_name(op)) + ")");
  }
  nodes_.push_back(Node{value, da, db, a, b, op});
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Tape::check_input(Var v) const {
  if (!owns(v)) throw std::invalid_argument("autodiff: input variable belongs to another tape");
}

Var Tape::leaf(double value) { return push(Op::leaf, value, 0, 0.0, 0, 0.0); }

Var Tape::constant(double value) { return push(Op::constant, value, 0, 0.0, 0, 0.0); }

Var Tape::add(Var a, Var b) {
  check_input(a);
  check_input(b);
  return push(Op::add, a.value() + b.value(), a.index_, 1.0, b.index_, 1.0);
}

Var Tape::sub(Var a, Var b) {
  check_input(a);
  check_input(b);
  return push(Op::sub, a.value() - b.value(), a.index_, 1.0, b.index_, -1.0);
}

Var Tape::mul(Var a, Var b) {
  check_input(a);
  check_input(b);
  const double x = a.value();
  const double y = b.value();
  return push(Op::mul, x * y, a.index_, y, b.index_, x);
}

Var Tape::div(Var a, Var b) {
  check_input(a);
  check_input(b);
  const double x = a.value();
  const double y = b.value();
  if (y == 0.0) throw NumericError("autodiff: division by zero at tape node " + std::to_string(nodes_.size()));
  const double q = x / y;
  return push(Op::div, q, a.index_, 1.0 / y, b.index_, -q / y);
}

Var Tape::neg(Var a) {
  check_input(a);
  return push(Op::neg, -a.value(), a.index_, -1.0, 0, 0.0);
}

Var Tape::tanh(Var a) {
  check_input(a);
  const double t = std::tanh(a.value());
  return push(Op::tanh, t, a.index_, 1.0 - t * t, 0, 0.0);
}

Var Tape::sqrt(Var a) {
  check_input(a);
  const double x = a.value();
  if (x <= 0.0) {
    throw NumericError("autodiff: sqrt of non-positive value at tape node " + std::to_string(nodes_.size()));
  }
  const double r = std::sqrt(x);
  return push(Op::sqrt, r, a.index_, 0.5 / r, 0, 0.0);
}

Var Tape::pow(Var a, double p) {
  check_input(a);
  const double x = a.value();
  return push(Op::pow, std::pow(x, p), a.index_, p * std::pow(x, p - 1.0), 0, p);
}

Var Tape::abs_pow(Var a, double p) {
  check_input(a);
  if (!(p > 1.0)) throw std::invalid_argument("autodiff: abs_pow requires exponent > 1");
  const double x = a.value();
  const double ax = std::fabs(x);
  double partial = 0.0;
  if (x != 0.0) partial = (x > 0.0 ? p : -p) * std::pow(ax, p - 1.0);
  return push(Op::abs_pow, std::pow(ax, p), a.index_, partial, 0, p);
}

Var Tape::scale(Var a, double c) {
  check_input(a);
  return push(Op::scale, c * a.value(), a.index_, c, 0, c);
}

Var Tape::shift(Var a, double c) {
  check_input(a);
  return push(Op::shift, a.value() + c, a.index_, 1.0, 0, c);
}

Var Tape::record(Op op, std::span<const Var> in, double c) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument("autodiff: " + std::string(op_name(op)) + " expects " + std::to_string(n) +
                                  " inputs");
    }
  };
  switch (op) {
    case Op::leaf: need(0); return leaf(c);
    case Op::constant: need(0); return constant(c);
    case Op::add: need(2); return add(in[0], in[1]);
    case Op::sub: need(2); return sub(in[0], in[1]);
    case Op::mul: need(2); return mul(in[0], in[1]);
    case Op::div: need(2); return div(in[0], in[1]);
    case Op::neg: need(1); return neg(in[0]);
    case Op::tanh: need(1); return tanh(in[0]);
    case Op::sqrt: need(1); return sqrt(in[0]);
    case Op::pow: need(1); return pow(in[0], c);
    case Op::abs_pow: need(1); return abs_pow(in[0], c);
    case Op::scale: need(1); return scale(in[0], c);
    case Op::shift: need(1); return shift(in[0], c);
  }
  throw std::invalid_argument("autodiff: unknown op");
}

void Tape::backward(Var output, std::vector<double>& adjoint) const {
  if (!owns(output)) throw std::invalid_argument("autodiff: output variable is not on this tape");
  adjoint.assign(nodes_.size(), 0.0);
  adjoint[static_cast<std::size_t>(output.index_)] = 1.0;
  const Node* nodes = nodes_.data();
  double* adj = adjoint.data();
  for (std::int32_t i = output.index_; i > 0; --i) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes[i];
    adj[n.a] += g * n.da;
    adj[n.b] += g * n.db;
  }
  adj[0] = 0.0;
}

Gradient Tape::backward(Var output) const {
  std::vector<double> adjoint;
  backward(output, adjoint);
  return Gradient(std::move(adjoint));
}

std::int32_t Tape::replay_mismatch() const {
  std::vector<double> v(nodes_.size(), 0.0);
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double x = v[static_cast<std::size_t>(n.a)];
    const double y = v[static_cast<std::size_t>(n.b)];
    double r = 0.0;
    switch (n.op) {
      case Op::leaf:
      case Op::constant: r = n.value; break;
      case Op::add: r = x + y; break;
      case Op::sub: r = x - y; break;
      case Op::mul: r = x * y; break;
      case Op::div: r = x / y; break;
      case Op::neg: r = -x; break;
      case Op::tanh: r = std::tanh(x); break;
      case Op::sqrt: r = std::sqrt(x); break;
      case Op::pow: r = std::pow(x, n.db); break;
      case Op::abs_pow: r = std::pow(std::fabs(x), n.db); break;
      case Op::scale: r = n.db * x; break;
      case Op::shift: r = x + n.db; break;
    }
    v[i] = r;
    if (r != n.value) return static_cast<std::int32_t>(i);
  }
  return -1;
}

}  // namespace execlab::ad
