#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Reverse-mode automatic differentiation on a per-thread tape.
//
// Var records at most two parent edges per operation. Gradients are obtained
// by a reverse sweep over a contiguous node range, which supports a
// checkpointing pattern: record a suffix (e.g. one datum's contribution),
// sweep it into the adjoints of the shared prefix, then truncate the suffix
// and record the next one. Memory stays bounded by prefix + one suffix.

namespace nvkm::ad {

struct Node {
  double w1, w2;
  std::int32_t p1, p2;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1 << 16); }

  std::int32_t leaf() {
    nodes_.push_back(Node{0.0, 0.0, -1, -1});
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  std::int32_t push1(double w1, std::int32_t p1) {
    nodes_.push_back(Node{w1, 0.0, p1, -1});
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  std::int32_t push2(double w1, std::int32_t p1, double w2, std::int32_t p2) {
    nodes_.push_back(Node{w1, w2, p1, p2});
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }

  // Drops nodes at and above `mark`. Adjoints accumulated below `mark` are kept.
  void truncate(std::size_t mark) {
    nodes_.resize(mark);
    if (adj_.size() > mark) adj_.resize(mark);
  }

  void seed(std::int32_t idx, double weight) {
    if (adj_.size() < nodes_.size()) adj_.resize(nodes_.size(), 0.0);
    adj_[static_cast<std::size_t>(idx)] += weight;
  }

  // Reverse sweep over [lo, size). Adjoints of nodes below lo accumulate and
  // survive subsequent truncation to lo.
  void backward_to(std::size_t lo) {
    if (adj_.size() < nodes_.size()) adj_.resize(nodes_.size(), 0.0);
    for (std::size_t k = nodes_.size(); k-- > lo;) {
      const double a = adj_[k];
      if (a == 0.0) continue;
      const Node& n = nodes_[k];
      if (n.p1 >= 0) adj_[static_cast<std::size_t>(n.p1)] += n.w1 * a;
      if (n.p2 >= 0) adj_[static_cast<std::size_t>(n.p2)] += n.w2 * a;
    }
  }

  double adjoint(std::int32_t idx) const {
    const auto k = static_cast<std::size_t>(idx);
    return k < adj_.size() ? adj_[k] : 0.0;
  }

  void clear() {
    nodes_.clear();
    adj_.clear();
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adj_;
};

inline Tape*& active_tape() {
  thread_local Tape* t = nullptr;
  return t;
}

// Binds a tape to the current thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(active_tape()) { active_tape() = &t; }
  ~TapeScope() { active_tape() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Differentiable scalar. i < 0 marks a constant (no tape node).
struct Var {
  double v = 0.0;
  std::int32_t i = -1;

  Var() = default;
  Var(double x) : v(x), i(-1) {}  // NOLINT: implicit by design
  Var(double x, std::int32_t idx) : v(x), i(idx) {}

  static Var leaf(double x) { return Var{x, active_tape()->leaf()}; }
};

}  // namespace nvkm::ad

namespace nvkm {
inline double val(double x) { return x; }
inline double val(const ad::Var& x) { return x.v; }
}  // namespace nvkm

namespace nvkm::ad {
using nvkm::val;

namespace detail {
inline std::int32_t unary(double w, std::int32_t p) {
  return p >= 0 ? active_tape()->push1(w, p) : -1;
}
inline std::int32_t binary(double w1, std::int32_t p1, double w2, std::int32_t p2) {
  if (p1 >= 0 && p2 >= 0) return active_tape()->push2(w1, p1, w2, p2);
  if (p1 >= 0) return active_tape()->push1(w1, p1);
  if (p2 >= 0) return active_tape()->push1(w2, p2);
  return -1;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return Var{a.v + b.v, detail::binary(1.0, a.i, 1.0, b.i)};
}
inline Var operator-(const Var& a, const Var& b) {
  return Var{a.v - b.v, detail::binary(1.0, a.i, -1.0, b.i)};
}
inline Var operator*(const Var& a, const Var& b) {
  return Var{a.v * b.v, detail::binary(b.v, a.i, a.v, b.i)};
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.v;
  return Var{a.v * inv, detail::binary(inv, a.i, -a.v * inv * inv, b.i)};
}
inline Var operator-(const Var& a) { return Var{-a.v, detail::unary(-1.0, a.i)}; }
inline Var operator+(const Var& a) { return a; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return Var{e, detail::unary(e, a.i)};
}
inline Var log(const Var& a) { return Var{std::log(a.v), detail::unary(1.0 / a.v, a.i)}; }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return Var{s, detail::unary(0.5 / s, a.i)};
}
inline Var cos(const Var& a) { return Var{std::cos(a.v), detail::unary(-std::sin(a.v), a.i)}; }
inline Var sin(const Var& a) { return Var{std::sin(a.v), detail::unary(std::cos(a.v), a.i)}; }
inline Var pow(const Var& a, double e) {
  return Var{std::pow(a.v, e), detail::unary(e * std::pow(a.v, e - 1.0), a.i)};
}

}  // namespace nvkm::ad
