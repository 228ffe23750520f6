#pragma once

// Scalar reverse-mode differentiation on an append-only tape.
//
// Every recorded node stores its forward value and the local partials with
// respect to (at most) two inputs. Node 0 is a permanent zero constant that
// doubles as the "no input" slot, which keeps the reverse sweep branch-free.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace execlab::ad {

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  tanh,
  sqrt,
  pow,      // x^p, p a recorded constant
  abs_pow,  // |x|^p, p > 1 a recorded constant
  scale,    // c * x, c held in the constant input
  shift,    // x + c, c held in the constant input
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid only for its own tape
/// and only until that tape is cleared.
class Var {
 public:
  Var() = default;

  double value() const;
  std::int32_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
};

/// Adjoints of every node on a tape with respect to one output.
class Gradient {
 public:
  Gradient() = default;
  explicit Gradient(std::vector<double> adjoint) : adjoint_(std::move(adjoint)) {}

  double operator[](Var v) const;
  std::span<const double> raw() const { return adjoint_; }

 private:
  std::vector<double> adjoint_;
};

class Tape {
 public:
  // For unary ops that carry a constant (pow, abs_pow, scale, shift), `b`
  // is the zero sink and `db` holds the constant: the reverse sweep then
  // only ever adds into the sink's adjoint, which is discarded.
  struct Node {
    double value;
    double da;
    double db;
    std::int32_t a;
    std::int32_t b;
    Op op;
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Differentiable input.
  Var leaf(double value);
  Var constant(double value);
  Var zero() { return Var(this, 0); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var tanh(Var a);
  Var sqrt(Var a);
  Var pow(Var a, double p);
  /// |a|^p for p > 1; the derivative at a = 0 is defined as 0.
  Var abs_pow(Var a, double p);
  Var scale(Var a, double c);
  Var shift(Var a, double c);

  /// Generic entry point; `c` is the exponent for pow/abs_pow, the factor for
  /// scale, the offset for shift, the value for constant/leaf.
  Var record(Op op, std::span<const Var> inputs, double c = 0.0);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::int32_t i) const { return nodes_[static_cast<std::size_t>(i)]; }
  bool owns(Var v) const { return v.tape_ == this && v.index_ >= 0 && static_cast<std::size_t>(v.index_) < nodes_.size(); }

  /// Drops every node except the zero sink. Capacity is kept.
  void clear();
  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// One reverse sweep from `output`.
  Gradient backward(Var output) const;
  /// Same, writing into a caller-owned buffer (resized to size()).
  void backward(Var output, std::vector<double>& adjoint) const;

  /// Recomputes every value from leaves and constants and compares with the
  /// stored ones. Returns the index of the first mismatch, or -1.
  std::int32_t replay_mismatch() const;

 private:
  Var push(Op op, double value, std::int32_t a, double da, std::int32_t b, double db);
  void check_input(Var v) const;

  std::vector<Node> nodes_;
};

inline double Var::value() const { return tape_->node(index_).value; }

// Operator sugar so templated numeric code works with both double and Var.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape()->div(a, b); }
inline Var operator-(Var a) { return a.tape()->neg(a); }
inline Var operator*(Var a, double c) { return a.tape()->scale(a, c); }
inline Var operator*(double c, Var a) { return a.tape()->scale(a, c); }
inline Var operator/(Var a, double c) { return a.tape()->scale(a, 1.0 / c); }
inline Var operator+(Var a, double c) { return a.tape()->shift(a, c); }
inline Var operator+(double c, Var a) { return a.tape()->shift(a, c); }
inline Var operator-(Var a, double c) { return a.tape()->shift(a, -c); }
inline Var operator-(double c, Var a) {
  auto* t = a.tape();
  return t->shift(t->neg(a), c);
}
inline Var& operator+=(Var& a, Var b) { return a = a + b; }
inline Var& operator-=(Var& a, Var b) { return a = a - b; }

inline Var tanh(Var a) { return a.tape()->tanh(a); }
inline Var sqrt(Var a) { return a.tape()->sqrt(a); }
inline Var pow(Var a, double p) { return a.tape()->pow(a, p); }
inline Var abs_pow(Var a, double p) { return a.tape()->abs_pow(a, p); }

/// |x|^p for plain doubles with the same conventions as the taped version.
double abs_pow(double x, double p);

inline double value_of(double x) { return x; }
inline double value_of(Var v) { return v.value(); }

}  // namespace execlab::ad
