#pragma once

// Minimal reverse-mode automatic differentiation.
//
// A Var is a value plus a slot on the thread's active Tape. Operations on
// Vars record their local partial derivatives; Tape::gradient() sweeps the
// tape backwards. Vars that never touched an input carry slot -1 and are
// treated as constants, so no nodes are recorded for them.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace holofit::ad {

class Tape {
 public:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };

  std::int32_t push(std::int32_t a, double da, std::int32_t b = -1, double db = 0.0) {
    nodes_.push_back(Node{a, b, da, db});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t new_input() { return push(-1, 0.0); }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Adjoints of every node with respect to `output`.
  const std::vector<double>& gradient(std::int32_t output) {
    adjoint_.assign(nodes_.size(), 0.0);
    if (output < 0) return adjoint_;
    adjoint_[output] = 1.0;
    for (std::int32_t i = output; i >= 0; --i) {
      const double g = adjoint_[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adjoint_[n.a] += g * n.da;
      if (n.b >= 0) adjoint_[n.b] += g * n.db;
    }
    return adjoint_;
  }

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adjoint_;
};

// Installs a tape as the thread's active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) {
    tape.clear();
    Tape::active() = &tape;
  }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: implicit constants are the point
  Var(double v, std::int32_t slot) : value_(v), slot_(slot) {}

  static Var input(double v) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw std::logic_error("ad::Var::input without an active tape");
    return Var(v, tape->new_input());
  }

  double value() const { return value_; }
  std::int32_t slot() const { return slot_; }
  bool is_constant() const { return slot_ < 0; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var unary(const Var& x, double value, double dx) {
    if (x.slot_ < 0) return Var(value);
    return Var(value, Tape::active()->push(x.slot_, dx));
  }

  friend Var binary(const Var& x, const Var& y, double value, double dx, double dy) {
    if (x.slot_ < 0 && y.slot_ < 0) return Var(value);
    if (x.slot_ < 0) return Var(value, Tape::active()->push(y.slot_, dy));
    if (y.slot_ < 0) return Var(value, Tape::active()->push(x.slot_, dx));
    return Var(value, Tape::active()->push(x.slot_, dx, y.slot_, dy));
  }

  friend Var operator+(const Var& x, const Var& y) {
    return binary(x, y, x.value_ + y.value_, 1.0, 1.0);
  }
  friend Var operator-(const Var& x, const Var& y) {
    return binary(x, y, x.value_ - y.value_, 1.0, -1.0);
  }
  friend Var operator*(const Var& x, const Var& y) {
    return binary(x, y, x.value_ * y.value_, y.value_, x.value_);
  }
  friend Var operator/(const Var& x, const Var& y) {
    const double q = x.value_ / y.value_;
    return binary(x, y, q, 1.0 / y.value_, -q / y.value_);
  }
  friend Var operator-(const Var& x) { return unary(x, -x.value_, -1.0); }

  friend bool operator<(const Var& x, const Var& y) { return x.value_ < y.value_; }
  friend bool operator>(const Var& x, const Var& y) { return x.value_ > y.value_; }
  friend bool operator<=(const Var& x, const Var& y) { return x.value_ <= y.value_; }
  friend bool operator>=(const Var& x, const Var& y) { return x.value_ >= y.value_; }

 private:
  double value_ = 0.0;
  std::int32_t slot_ = -1;
};

// sqrt(0) has an infinite derivative; it is clamped to 0 so that an exactly
// zero-length quantity contributes a subgradient instead of NaN.
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return unary(x, s, s > 0.0 ? 0.5 / s : 0.0);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(x, e, e);
}
inline Var log(const Var& x) { return unary(x, std::log(x.value()), 1.0 / x.value()); }
inline Var sin(const Var& x) { return unary(x, std::sin(x.value()), std::cos(x.value())); }
inline Var cos(const Var& x) { return unary(x, std::cos(x.value()), -std::sin(x.value())); }
inline Var atan2(const Var& y, const Var& x) {
  const double r2 = x.value() * x.value() + y.value() * y.value();
  if (r2 == 0.0) return Var(0.0);
  return binary(y, x, std::atan2(y.value(), x.value()), x.value() / r2, -y.value() / r2);
}

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.value(); }

// Evaluates `fn` on Var inputs seeded from `x` and returns its value and
// gradient. `fn` must map std::span<const Var> to Var.
template <class Fn>
double value_and_gradient(Fn&& fn, std::span<const double> x, std::span<double> grad) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Var> in;
  in.reserve(x.size());
  for (double v : x) in.push_back(Var::input(v));
  const Var out = fn(std::span<const Var>(in));
  const auto& adj = tape.gradient(out.slot());
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = adj[in[i].slot()];
  return out.value();
}

}  // namespace holofit::ad
