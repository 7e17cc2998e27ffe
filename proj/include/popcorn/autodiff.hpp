#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

// Minimal reverse-mode tape. Records one node per scalar operation with up to
// two parents and precomputed local partials; a single backward sweep yields
// gradients w.r.t. every input variable.
namespace popcorn::ad {

class Tape {
 public:
  struct Node {
    double da = 0.0, db = 0.0;
    std::int32_t a = -1, b = -1;
  };

  std::int32_t record(double da, std::int32_t a, double db, std::int32_t b) {
    nodes_.push_back({da, db, a, b});
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Adjoints of all nodes, seeded with d(root)/d(root) = 1.
  std::vector<double> backward(std::int32_t root) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (root < 0) return adj;
    adj[root] = 1.0;
    for (std::int32_t i = root; i >= 0; --i) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adj[n.a] += n.da * g;
      if (n.b >= 0) adj[n.b] += n.db * g;
    }
    return adj;
  }

 private:
  std::vector<Node> nodes_;
};

// A scalar on the tape. idx < 0 marks a plain constant, so generic code can
// freely mix Var with double-valued literals.
struct Var {
  double v = 0.0;
  std::int32_t idx = -1;
  Tape* tape = nullptr;

  Var() = default;
  Var(double c) : v(c) {}  // NOLINT: implicit by design
  Var(double val, std::int32_t i, Tape* t) : v(val), idx(i), tape(t) {}

  double val() const { return v; }
  bool is_const() const { return idx < 0; }

  static Var input(Tape& t, double val) {
    return Var(val, t.record(0.0, -1, 0.0, -1), &t);
  }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
};

inline Tape* tape_of(const Var& a, const Var& b) {
  return a.tape ? a.tape : b.tape;
}

inline Var unary(const Var& x, double val, double dx) {
  if (x.is_const()) return Var(val);
  return Var(val, x.tape->record(dx, x.idx, 0.0, -1), x.tape);
}

inline Var binary(const Var& x, const Var& y, double val, double dx,
                  double dy) {
  Tape* t = tape_of(x, y);
  if (!t) return Var(val);
  return Var(val, t->record(dx, x.idx, dy, y.idx), t);
}

inline Var operator+(const Var& x, const Var& y) {
  return binary(x, y, x.v + y.v, 1.0, 1.0);
}
inline Var operator-(const Var& x, const Var& y) {
  return binary(x, y, x.v - y.v, 1.0, -1.0);
}
inline Var operator*(const Var& x, const Var& y) {
  return binary(x, y, x.v * y.v, y.v, x.v);
}
inline Var operator/(const Var& x, const Var& y) {
  const double inv = 1.0 / y.v;
  return binary(x, y, x.v * inv, inv, -x.v * inv * inv);
}
inline Var operator-(const Var& x) { return unary(x, -x.v, -1.0); }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  return unary(x, e, e);
}
inline Var log(const Var& x) { return unary(x, std::log(x.v), 1.0 / x.v); }
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  return unary(x, s, 0.5 / s);
}

}  // namespace popcorn::ad

namespace popcorn {

// Generic access to the numeric value of a scalar, for the branch decisions
// (max shifts, underflow guards) shared by double and Var instantiations.
inline double scalar_value(double x) { return x; }
inline double scalar_value(const ad::Var& x) { return x.val(); }

template <class T>
T softplus(const T& x) {
  if (scalar_value(x) > 30.0) return x;
  using std::exp;
  using std::log;
  using ad::exp;
  using ad::log;
  return log(T(1.0) + exp(x));
}

inline double softplus_inv(double y) {
  // Inverse of log(1+e^x); y must be positive.
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

}  // namespace popcorn
