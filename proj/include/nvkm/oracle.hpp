#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "nvkm/complex.hpp"
#include "nvkm/linalg.hpp"
#include "nvkm/parallel.hpp"
#include "nvkm/pathwise.hpp"
#include "nvkm/rng.hpp"

// Brute-force references: dense-quadrature Volterra evaluation, Monte-Carlo
// KL, and finite-difference gradients. Test oracles only; nothing here is on
// a production path.

namespace nvkm::oracle {

// Adaptive Simpson on a complex-valued integrand.
namespace detail {
inline ComplexD simpson(double a, double b, const ComplexD& fa, const ComplexD& fb,
                        const ComplexD& fm) {
  const double h = (b - a) / 6.0;
  return ComplexD{h * (fa.re + 4.0 * fm.re + fb.re), h * (fa.im + 4.0 * fm.im + fb.im)};
}

template <class F>
ComplexD adapt(const F& f, double a, double b, ComplexD fa, ComplexD fb, ComplexD fm,
               ComplexD whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const ComplexD fl = f(0.5 * (a + m));
  const ComplexD fr = f(0.5 * (m + b));
  const ComplexD left = simpson(a, m, fa, fm, fl);
  const ComplexD right = simpson(m, b, fm, fb, fr);
  const double err = std::abs(left.re + right.re - whole.re) + std::abs(left.im + right.im - whole.im);
  if (depth <= 0 || err < 15.0 * tol) {
    const ComplexD sum{left.re + right.re, left.im + right.im};
    return ComplexD{sum.re + (sum.re - whole.re) / 15.0, sum.im + (sum.im - whole.im) / 15.0};
  }
  const ComplexD l = adapt(f, a, m, fa, fm, fl, left, 0.5 * tol, depth - 1);
  const ComplexD r = adapt(f, m, b, fm, fb, fr, right, 0.5 * tol, depth - 1);
  return ComplexD{l.re + r.re, l.im + r.im};
}
}  // namespace detail

// Integrates f over [a, b] splitting into `panels` initial sections, each
// refined adaptively to tolerance `tol` (absolute).
template <class F>
ComplexD adaptive_quad(const F& f, double a, double b, double tol = 1e-10, int panels = 16,
                       int max_depth = 28) {
  ComplexD total{0.0, 0.0};
  const double w = (b - a) / panels;
  for (int k = 0; k < panels; ++k) {
    const double lo = a + k * w, hi = lo + w;
    const ComplexD flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    const ComplexD whole = detail::simpson(lo, hi, flo, fhi, fmid);
    const ComplexD part = detail::adapt(f, lo, hi, flo, fhi, fmid, whole, tol / panels, max_depth);
    total.re += part.re;
    total.im += part.im;
  }
  return total;
}

template <class F>
double adaptive_quad_real(const F& f, double a, double b, double tol = 1e-10) {
  return adaptive_quad([&](double x) { return ComplexD{f(x), 0.0}; }, a, b, tol).re;
}

struct QuadratureGrid {
  std::size_t points_per_dim = 2048;
  double half_width_sigmas = 12.0;  // bounds are t -/+ this / sqrt(alpha)
};

// Trapezoid approximation of the order-c Volterra term
//   integral of g(t - tau) prod_k u(tau_k) dtau over R^c,
// where g includes its decay envelope. Supports c <= 3.
inline double quadrature_volterra(const ExplicitPath<double>& u, const ExplicitPath<double>& g,
                                  double t, const QuadratureGrid& grid) {
  const std::size_t c = g.dim();
  if (c > 3) throw std::invalid_argument("quadrature_volterra: c > 3 unsupported");
  if (grid.points_per_dim < 64)
    throw std::invalid_argument("quadrature_volterra: need >= 64 points per dim");
  if (!(g.alpha > 0.0)) throw std::invalid_argument("quadrature_volterra: filter decay required");

  const std::size_t n = grid.points_per_dim;
  const double l = grid.half_width_sigmas / std::sqrt(g.alpha);
  const double lo = t - l, hi = t + l;
  const double h = (hi - lo) / static_cast<double>(n - 1);

  std::vector<double> tau(n), uval(n), wt(n);
  for (std::size_t i = 0; i < n; ++i) {
    tau[i] = lo + h * static_cast<double>(i);
    uval[i] = eval_path1(u, tau[i]);
    wt[i] = (i == 0 || i == n - 1) ? 0.5 : 1.0;
  }

  // Slab-parallel over the first axis; slabs summed in index order.
  std::vector<double> slab(n, 0.0);
  parallel_for_tasks(n, [&](std::size_t i0) {
    double s = 0.0;
    double pt[3];
    if (c == 1) {
      pt[0] = t - tau[i0];
      s = wt[i0] * uval[i0] * eval_path(g, pt, 1);
    } else if (c == 2) {
      pt[0] = t - tau[i0];
      for (std::size_t i1 = 0; i1 < n; ++i1) {
        pt[1] = t - tau[i1];
        s += wt[i0] * wt[i1] * uval[i0] * uval[i1] * eval_path(g, pt, 2);
      }
    } else {
      pt[0] = t - tau[i0];
      for (std::size_t i1 = 0; i1 < n; ++i1) {
        pt[1] = t - tau[i1];
        const double w01 = wt[i0] * wt[i1] * uval[i0] * uval[i1];
        for (std::size_t i2 = 0; i2 < n; ++i2) {
          pt[2] = t - tau[i2];
          s += w01 * wt[i2] * uval[i2] * eval_path(g, pt, 3);
        }
      }
    }
    slab[i0] = s;
  });
  double total = 0.0;
  for (double s : slab) total += s;
  return total * std::pow(h, static_cast<double>(c));
}

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

// Monte-Carlo estimate of KL[q || N(0, K)] as mean of log q(v) - log p(v)
// over v ~ q. log q uses the reparameterization draw directly.
inline McEstimate mc_kl(const VariationalGaussian& q, const MatD& prior_gram, std::size_t n_draws,
                        Rng& rng) {
  if (n_draws < 1000) throw std::invalid_argument("mc_kl: need >= 1e3 draws");
  const std::size_t m = q.m();
  MatD kl = prior_gram;
  if (!try_cholesky(kl)) throw IllConditionedGram("mc_kl: prior gram not factorizable");
  double logdet_q = 0.0;
  for (std::size_t i = 0; i < m; ++i) logdet_q += std::log(q.l(i, i));
  double logdet_p = 0.0;
  for (std::size_t i = 0; i < m; ++i) logdet_p += std::log(kl(i, i));

  double sum = 0.0, sumsq = 0.0;
  VecD eps(m), v(m);
  for (std::size_t it = 0; it < n_draws; ++it) {
    for (auto& e : eps) e = rng.normal();
    for (std::size_t i = 0; i < m; ++i) {
      double s = q.mu[i];
      for (std::size_t j = 0; j <= i; ++j) s += q.l(i, j) * eps[j];
      v[i] = s;
    }
    double eps2 = 0.0;
    for (double e : eps) eps2 += e * e;
    const VecD y = solve_lower(kl, v);
    double quad = 0.0;
    for (double x : y) quad += x * x;
    const double diff = (-logdet_q - 0.5 * eps2) - (-logdet_p - 0.5 * quad);
    sum += diff;
    sumsq += diff * diff;
  }
  const double nd = static_cast<double>(n_draws);
  const double mean = sum / nd;
  const double var = std::max(0.0, sumsq / nd - mean * mean);
  return {mean, std::sqrt(var / nd)};
}

// Central differences per coordinate; step scaled by max(1, |x_i|).
inline VecD finite_diff_grad(const std::function<double(const VecD&)>& f, const VecD& x,
                             double base_step = 1e-4) {
  VecD g(x.size());
  VecD xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = base_step * std::max(1.0, std::abs(x[i]));
    const double saved = xp[i];
    xp[i] = saved + h;
    const double fp = f(xp);
    xp[i] = saved - h;
    const double fm = f(xp);
    xp[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace nvkm::oracle
