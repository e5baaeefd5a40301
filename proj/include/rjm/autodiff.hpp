#pragma once

#include <cmath>
#include <vector>

// Minimal reverse-mode scalar tape. Used for the low-dimensional global
// transforms of the posterior; the per-subject terms are differentiated by
// hand for speed.
namespace rjm::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double value, int index, Tape* tape) : value_(value), index_(index), tape_(tape) {}

  double value() const { return value_; }
  int index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  double value_ = 0.0;
  int index_ = -1;
  Tape* tape_ = nullptr;
};

class Tape {
 public:
  Var variable(double value) { return Var(value, push(-1, 0.0, -1, 0.0), this); }
  Var constant(double value) { return variable(value); }

  Var unary(const Var& a, double value, double da) {
    return Var(value, push(a.index(), da, -1, 0.0), this);
  }
  Var binary(const Var& a, double da, const Var& b, double db, double value) {
    return Var(value, push(a.index(), da, b.index(), db), this);
  }

  // Reverse sweep. `adjoints` must be sized to size(); on entry it holds the
  // seeds of the outputs, on exit the adjoints of every node.
  void backward(std::vector<double>& adjoints) const {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const double g = adjoints[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adjoints[n.a] += g * n.da;
      if (n.b >= 0) adjoints[n.b] += g * n.db;
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    int a, b;
    double da, db;
  };

  int push(int a, double da, int b, double db) {
    nodes_.push_back({a, b, da, db});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

inline Var operator+(const Var& a, const Var& b) {
  return a.tape()->binary(a, 1.0, b, 1.0, a.value() + b.value());
}
inline Var operator-(const Var& a, const Var& b) {
  return a.tape()->binary(a, 1.0, b, -1.0, a.value() - b.value());
}
inline Var operator*(const Var& a, const Var& b) {
  return a.tape()->binary(a, b.value(), b, a.value(), a.value() * b.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return a.tape()->binary(a, 1.0 / b.value(), b, -q / b.value(), q);
}
inline Var operator+(const Var& a, double c) { return a.tape()->unary(a, a.value() + c, 1.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a.tape()->unary(a, a.value() - c, 1.0); }
inline Var operator-(double c, const Var& a) { return a.tape()->unary(a, c - a.value(), -1.0); }
inline Var operator*(const Var& a, double c) { return a.tape()->unary(a, a.value() * c, c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a * (1.0 / c); }
inline Var operator-(const Var& a) { return a.tape()->unary(a, -a.value(), -1.0); }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return a.tape()->unary(a, e, e);
}
inline Var log(const Var& a) { return a.tape()->unary(a, std::log(a.value()), 1.0 / a.value()); }
inline Var log1p(const Var& a) {
  return a.tape()->unary(a, std::log1p(a.value()), 1.0 / (1.0 + a.value()));
}
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return a.tape()->unary(a, s, 0.5 / s);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return a.tape()->unary(a, t, 1.0 - t * t);
}
inline Var square(const Var& a) {
  return a.tape()->unary(a, a.value() * a.value(), 2.0 * a.value());
}

}  // namespace rjm::ad
