#pragma once

#include <cmath>

#include "nvkm/ad.hpp"

// Minimal complex arithmetic templated on the scalar type so the same
// expressions run on double and on ad::Var.

namespace nvkm {

template <class T>
struct Cplx {
  T re{}, im{};

  Cplx() = default;
  Cplx(T r) : re(r), im(T(0.0)) {}  // NOLINT: implicit by design
  Cplx(T r, T i) : re(r), im(i) {}
};

template <class T>
Cplx<T> operator+(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re + b.re, a.im + b.im};
}
template <class T>
Cplx<T> operator-(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re - b.re, a.im - b.im};
}
template <class T>
Cplx<T> operator*(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T>
Cplx<T> operator*(const T& s, const Cplx<T>& a) {
  return {s * a.re, s * a.im};
}
template <class T>
Cplx<T> operator*(const Cplx<T>& a, const T& s) {
  return {a.re * s, a.im * s};
}
template <class T>
Cplx<T> operator+(const Cplx<T>& a, const T& s) {
  return {a.re + s, a.im};
}
template <class T>
Cplx<T> operator-(const Cplx<T>& a) {
  return {-a.re, -a.im};
}

template <class T>
Cplx<T> conj(const Cplx<T>& a) {
  return {a.re, -a.im};
}

// exp(re + i*im)
template <class T>
Cplx<T> cexp(const Cplx<T>& a) {
  using std::cos;
  using std::exp;
  using std::sin;
  const T m = exp(a.re);
  return {m * cos(a.im), m * sin(a.im)};
}

// exp(i*phase)
template <class T>
Cplx<T> cis(const T& phase) {
  using std::cos;
  using std::sin;
  return {cos(phase), sin(phase)};
}

using ComplexD = Cplx<double>;

}  // namespace nvkm
