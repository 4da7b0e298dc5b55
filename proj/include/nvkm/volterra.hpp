#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvkm/complex.hpp"
#include "nvkm/errors.hpp"
#include "nvkm/pathwise.hpp"

// Closed-form evaluation of Volterra-series output samples. Each order-c term
// factorizes into products over dimensions of four elementary 1-D integrals
// of Gaussian envelopes against the explicit input-path representation.

namespace nvkm {

inline constexpr double kSqrtPi = 1.7724538509055160273;

namespace detail {
inline void require_positive(double x, const char* name) {
  if (!(x > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
}
inline void require_nonneg(double x, const char* name) {
  if (!(x >= 0.0)) throw std::invalid_argument(std::string(name) + " must be nonnegative");
}
}  // namespace detail

// integral over x of exp(-a x^2 + b x) = sqrt(pi/a) exp(b^2 / 4a), complex b.
template <class T>
Cplx<T> gauss_integral(const T& a, const Cplx<T>& b) {
  using std::sqrt;
  detail::require_positive(val(a), "gauss_integral: a");
  const Cplx<T> b2 = b * b;
  const T inv4a = T(1.0) / (T(4.0) * a);
  return sqrt(T(kSqrtPi * kSqrtPi) / a) * cexp(Cplx<T>{b2.re * inv4a, b2.im * inv4a});
}

// integral over tau of exp(-alpha (t-tau)^2 + i th1 (t-tau)) cos(th2 tau + b2).
// Written as two Gaussian-weighted phases; every exponent has nonpositive
// real part, so the expression cannot overflow for large th1 th2 / alpha.
template <class T>
Cplx<T> eval_I1a(double t, double alpha, const T& th1, const T& th2, const T& b2) {
  using std::exp;
  using std::sqrt;
  detail::require_positive(alpha, "eval_I1a: alpha");
  const T inv4a = T(1.0 / (4.0 * alpha));
  const T dm = th1 - th2;
  const T dp = th1 + th2;
  const T gm = exp(-(dm * dm) * inv4a);
  const T gp = exp(-(dp * dp) * inv4a);
  const T phase = th2 * T(t) + b2;
  const Cplx<T> e = cis(phase);
  const T pref = T(0.5 * kSqrtPi / std::sqrt(alpha));
  return pref * (gm * e + gp * conj(e));
}

// integral over tau of exp(-alpha (t-tau)^2 + i th1 (t-tau)) exp(-p2 (tau-z2)^2).
template <class T>
Cplx<T> eval_I1b(double t, double alpha, const T& th1, const T& p2, const T& z2) {
  using std::sqrt;
  detail::require_positive(alpha, "eval_I1b: alpha");
  detail::require_positive(val(p2), "eval_I1b: p2");
  const T s = T(alpha) + p2;
  const T dz = T(t) - z2;
  const T re = (T(-4.0 * alpha) * p2 * dz * dz - th1 * th1) / (T(4.0) * s);
  const T im = th1 * p2 * dz / s;
  return sqrt(T(kSqrtPi * kSqrtPi) / s) * cexp(Cplx<T>{re, im});
}

// integral over tau of exp(-alpha (t-tau)^2 - p1 (t-tau-z1)^2) cos(th2 tau + b2).
template <class T>
T eval_I2a(double t, double alpha, const T& p1, const T& z1, const T& th2, const T& b2) {
  using std::cos;
  using std::exp;
  using std::sqrt;
  detail::require_positive(alpha, "eval_I2a: alpha");
  detail::require_nonneg(val(p1), "eval_I2a: p1");
  const T s = T(alpha) + p1;
  const T gauss = exp(-(T(4.0 * alpha) * p1 * z1 * z1 + th2 * th2) / (T(4.0) * s));
  const T shift = T(t) - p1 * z1 / s;
  return sqrt(T(kSqrtPi * kSqrtPi) / s) * gauss * cos(th2 * shift + b2);
}

// integral over tau of exp(-alpha (t-tau)^2 - p1 (t-tau-z1)^2) exp(-p2 (tau-z2)^2).
template <class T>
T eval_I2b(double t, double alpha, const T& p1, const T& z1, const T& p2, const T& z2) {
  using std::exp;
  using std::sqrt;
  detail::require_positive(alpha, "eval_I2b: alpha");
  detail::require_nonneg(val(p1), "eval_I2b: p1");
  detail::require_positive(val(p2), "eval_I2b: p2");
  const T s = T(alpha) + p1 + p2;
  const T dz = T(t) - z2;
  const T cross = z1 + z2 - T(t);
  const T num = T(alpha) * (p1 * z1 * z1 + p2 * dz * dz) + p1 * p2 * cross * cross;
  return sqrt(T(kSqrtPi * kSqrtPi) / s) * exp(-num / s);
}

// Inner 1-D integral of the input path against the order-c envelope and one
// G-basis frequency th1:
//   integral of exp(-alpha (t-tau)^2 + i th1 (t-tau)) (u|v)(tau) dtau.
// The conjugate branch negates th1 and the input-basis frequencies/phases;
// the input kernel precision stays positive.
template <class T>
Cplx<T> input_envelope_integral(const ExplicitPath<T>& u, double t, double alpha, const T& th1,
                                bool conjugate) {
  const std::size_t nb = u.basis.nb(), mu = u.m();
  const double amp = std::sqrt(2.0 / static_cast<double>(nb));
  const T sgn = conjugate ? T(-1.0) : T(1.0);
  const T th1s = sgn * th1;
  Cplx<T> four{T(0.0), T(0.0)};
  for (std::size_t m = 0; m < nb; ++m) {
    const Cplx<T> ia = eval_I1a(t, alpha, th1s, sgn * u.basis.theta(m, 0), sgn * T(u.basis.beta[m]));
    four = four + T(u.basis.w[m]) * ia;
  }
  const T s2 = u.kernel.sigma * u.kernel.sigma;
  Cplx<T> math{T(0.0), T(0.0)};
  for (std::size_t n = 0; n < mu; ++n) {
    const Cplx<T> ib = eval_I1b(t, alpha, th1s, u.kernel.p, T(u.z(n, 0)));
    math = math + u.q[n] * ib;
  }
  return (u.basis.sigma * T(amp)) * four + s2 * math;
}

// Same shape for the Matheron half: the input path integrated against the
// envelope and one SE-kernel factor centered at scalar inducing coordinate z1.
template <class T>
T input_kernel_integral(const ExplicitPath<T>& u, double t, double alpha, const T& pg,
                        const T& z1) {
  const std::size_t nb = u.basis.nb(), mu = u.m();
  const double amp = std::sqrt(2.0 / static_cast<double>(nb));
  T four(0.0);
  for (std::size_t m = 0; m < nb; ++m) {
    four += T(u.basis.w[m]) *
            eval_I2a(t, alpha, pg, z1, u.basis.theta(m, 0), T(u.basis.beta[m]));
  }
  const T s2 = u.kernel.sigma * u.kernel.sigma;
  T math(0.0);
  for (std::size_t n = 0; n < mu; ++n) {
    math += u.q[n] * eval_I2b(t, alpha, pg, z1, u.kernel.p, T(u.z(n, 0)));
  }
  return u.basis.sigma * T(amp) * four + s2 * math;
}

// Order-c term of an output sample at time t, assembled in closed form from
// the input path and the order-c filter path (SE covariance times decay
// envelope alpha). The Fourier half is complex; conjugate pairs cancel the
// imaginary part, and the residual is checked against `realness_tol`.
template <class T>
T eval_term(const ExplicitPath<T>& u, const ExplicitPath<T>& g, double t,
            double realness_tol = 1e-9) {
  if (u.dim() != 1) throw std::invalid_argument("eval_term: input path must be 1-D");
  if (u.alpha != 0.0) throw std::invalid_argument("eval_term: input path must have no decay");
  detail::require_positive(g.alpha, "eval_term: filter decay");
  const std::size_t c = g.dim();
  const std::size_t nbg = g.basis.nb();
  const double alpha = g.alpha;

  // Fourier half: conjugate-pair products over dimensions.
  Cplx<T> fourier{T(0.0), T(0.0)};
  double mag = 0.0;  // running scale for the realness check
  for (std::size_t i = 0; i < nbg; ++i) {
    Cplx<T> prod_p{T(1.0), T(0.0)};
    Cplx<T> prod_m{T(1.0), T(0.0)};
    for (std::size_t j = 0; j < c; ++j) {
      const T th1 = g.basis.theta(i, j);
      prod_p = prod_p * input_envelope_integral(u, t, alpha, th1, false);
      prod_m = prod_m * input_envelope_integral(u, t, alpha, th1, true);
    }
    const Cplx<T> pair = cis(T(g.basis.beta[i])) * prod_p + cis(T(-g.basis.beta[i])) * prod_m;
    fourier = fourier + T(g.basis.w[i]) * pair;
    mag += std::abs(g.basis.w[i]) *
           (std::hypot(val(prod_p.re), val(prod_p.im)) + std::hypot(val(prod_m.re), val(prod_m.im)));
  }
  const double ampg = std::sqrt(2.0 / static_cast<double>(nbg));
  fourier = (g.basis.sigma * T(0.5 * ampg)) * fourier;
  mag *= std::abs(val(g.basis.sigma)) * 0.5 * ampg;

  const double resid = std::abs(val(fourier.im));
  const double scale = std::abs(val(fourier.re)) + mag + 1e-300;
  if (!(resid <= realness_tol * scale) || !std::isfinite(val(fourier.re)))
    throw NumericInconsistency("eval_term: imaginary residual " + std::to_string(resid) +
                               " exceeds " + std::to_string(realness_tol) + " * " +
                               std::to_string(scale));

  // Matheron half: per-axis factors shared across grid points through the
  // distinct scalar coordinates of the inducing grid.
  const T sg2 = g.kernel.sigma * g.kernel.sigma;
  Vec<T> axis(g.z_levels.size(), T(0.0));
  for (std::size_t a = 0; a < g.z_levels.size(); ++a)
    axis[a] = input_kernel_integral(u, t, alpha, g.kernel.p, T(g.z_levels[a]));
  T matheron(0.0);
  for (std::size_t j = 0; j < g.m(); ++j) {
    T prod(1.0);
    for (std::size_t i = 0; i < c; ++i) prod *= axis[g.z_level_idx[j * c + i]];
    matheron += g.q[j] * prod;
  }

  return fourier.re + sg2 * matheron;
}

// Output sample: sum of the order-c terms, one filter path per order.
template <class T>
T eval_output_sample(const ExplicitPath<T>& u, const std::vector<ExplicitPath<T>>& filters,
                     double t, double realness_tol = 1e-9) {
  T acc(0.0);
  for (const auto& g : filters) acc += eval_term(u, g, t, realness_tol);
  return acc;
}

}  // namespace nvkm
