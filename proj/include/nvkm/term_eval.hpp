#pragma once

#include <cmath>
#include <vector>

#include "nvkm/volterra.hpp"

// Cached evaluator for one order-c term. Algebraically identical to
// eval_term, but everything independent of the query time (Gaussian weight
// matrices, phase constants, per-axis exponents) is computed once at
// construction, which removes most transcendental calls from the hot loop.
// eval_term remains the reference; the two are pinned together by tests.

namespace nvkm {

template <class T>
class TermEvaluator {
 public:
  TermEvaluator(const ExplicitPath<T>* u, const ExplicitPath<T>* g) : u_(u), g_(g) {
    using std::exp;
    using std::sqrt;
    if (u->dim() != 1) throw std::invalid_argument("TermEvaluator: input path must be 1-D");
    if (u->alpha != 0.0)
      throw std::invalid_argument("TermEvaluator: input path must have no decay");
    detail::require_positive(g->alpha, "TermEvaluator: filter decay");

    const double alpha = g->alpha;
    const std::size_t nbu = u->basis.nb(), mu = u->m(), nbg = g->basis.nb(), c = g->dim();
    const T pu = u->kernel.p;
    const T s1 = T(alpha) + pu;

    // Fourier-half caches
    const double pref_a = 0.5 * kSqrtPi / std::sqrt(alpha);
    gm_ = Mat<T>(nbg * c, nbu);
    gp_ = Mat<T>(nbg * c, nbu);
    beta_cis_.resize(nbu);
    for (std::size_t m = 0; m < nbu; ++m) beta_cis_[m] = cis(T(u->basis.beta[m]));
    const T inv4a = T(1.0 / (4.0 * alpha));
    for (std::size_t i = 0; i < nbg; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const T th1 = g->basis.theta(i, j);
        for (std::size_t m = 0; m < nbu; ++m) {
          const T th2 = u->basis.theta(m, 0);
          const T dm = th1 - th2, dp = th1 + th2;
          gm_(i * c + j, m) = T(pref_a) * exp(-(dm * dm) * inv4a);
          gp_(i * c + j, m) = T(pref_a) * exp(-(dp * dp) * inv4a);
        }
      }
    }
    const T q1 = sqrt(T(kSqrtPi * kSqrtPi) / s1);
    f_ij_.resize(nbg * c);
    tfreq_.resize(nbg * c);
    zphase_ = Mat<Cplx<T>>(nbg * c, mu);
    for (std::size_t ij = 0; ij < nbg * c; ++ij) {
      const T th1 = g->basis.theta(ij / c, ij % c);
      f_ij_[ij] = q1 * exp(-(th1 * th1) / (T(4.0) * s1));
      tfreq_[ij] = th1 * pu / s1;
      for (std::size_t n = 0; n < mu; ++n)
        zphase_(ij, n) = cis(-(tfreq_[ij] * T(u->z(n, 0))));
    }
    r_coef_ = T(alpha) * pu / s1;

    // Matheron-half caches over the distinct axis coordinates of the grid
    const T pg = g->kernel.p;
    const T s2 = T(alpha) + pg;
    const std::size_t nl = g->z_levels.size();
    const T q2 = sqrt(T(kSqrtPi * kSqrtPi) / s2);
    i2a_amp_ = Mat<T>(nl, nbu);
    i2a_cis_ = Mat<Cplx<T>>(nl, nbu);
    for (std::size_t l = 0; l < nl; ++l) {
      const T zl = T(g->z_levels[l]);
      const T shift = pg * zl / s2;
      for (std::size_t m = 0; m < nbu; ++m) {
        const T th2 = u->basis.theta(m, 0);
        i2a_amp_(l, m) =
            q2 * exp(-(T(4.0 * alpha) * pg * zl * zl + th2 * th2) / (T(4.0) * s2));
        // em(t) already carries cis(beta); only the center shift is left here
        i2a_cis_(l, m) = cis(-(th2 * shift));
      }
    }
    const T s3 = T(alpha) + pg + pu;
    i2b_pref_ = sqrt(T(kSqrtPi * kSqrtPi) / s3);
    i2b_t2_ = -(T(alpha) * pu + pg * pu) / s3;
    i2b_t1_ = Mat<T>(nl, mu);
    i2b_t0_ = Mat<T>(nl, mu);
    for (std::size_t l = 0; l < nl; ++l) {
      const T zl = T(g->z_levels[l]);
      for (std::size_t n = 0; n < mu; ++n) {
        const T zn = T(u->z(n, 0));
        const T zsum = zl + zn;
        i2b_t1_(l, n) = (T(2.0 * alpha) * pu * zn + T(2.0) * pg * pu * zsum) / s3;
        i2b_t0_(l, n) =
            -(T(alpha) * pg * zl * zl + T(alpha) * pu * zn * zn + pg * pu * zsum * zsum) / s3;
      }
    }
  }

  T operator()(double t) const {
    using std::exp;
    const std::size_t nbu = u_->basis.nb(), mu = u_->m(), nbg = g_->basis.nb(), c = g_->dim();
    const T s2u = u_->kernel.sigma * u_->kernel.sigma;
    const T four_amp = u_->basis.sigma * T(std::sqrt(2.0 / double(nbu)));

    // per-t shared quantities
    std::vector<Cplx<T>> em(nbu);       // cis(theta_u t) * cis(beta)
    for (std::size_t m = 0; m < nbu; ++m)
      em[m] = cis(u_->basis.theta(m, 0) * T(t)) * beta_cis_[m];
    std::vector<T> rn(mu);              // exp(-alpha p (t - z_n)^2 / s1)
    for (std::size_t n = 0; n < mu; ++n) {
      const T dz = T(t) - T(u_->z(n, 0));
      rn[n] = exp(-(r_coef_ * dz * dz));
    }

    // Fourier half: conjugate-pair assembly over the filter basis
    Cplx<T> fourier{T(0.0), T(0.0)};
    std::vector<Cplx<T>> aplus(c);
    double mag = 0.0;
    for (std::size_t i = 0; i < nbg; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t ij = i * c + j;
        Cplx<T> fsum{T(0.0), T(0.0)};
        for (std::size_t m = 0; m < nbu; ++m) {
          const T wm = T(u_->basis.w[m]);
          const Cplx<T>& e = em[m];
          // w_m (Gm e + Gp conj(e))
          fsum.re += wm * (gm_(ij, m) * e.re + gp_(ij, m) * e.re);
          fsum.im += wm * (gm_(ij, m) * e.im - gp_(ij, m) * e.im);
        }
        Cplx<T> msum{T(0.0), T(0.0)};
        for (std::size_t n = 0; n < mu; ++n) {
          const T qr = u_->q[n] * rn[n];
          msum = msum + qr * zphase_(ij, n);
        }
        const Cplx<T> tphase = cis(tfreq_[ij] * T(t));
        const Cplx<T> matheron = (s2u * f_ij_[ij]) * (tphase * msum);
        aplus[j] = four_amp * fsum + matheron;
      }
      Cplx<T> prod_p = aplus[0];
      for (std::size_t j = 1; j < c; ++j) prod_p = prod_p * aplus[j];
      Cplx<T> prod_m = conj(aplus[0]);
      for (std::size_t j = 1; j < c; ++j) prod_m = prod_m * conj(aplus[j]);
      const Cplx<T> pair =
          cis(T(g_->basis.beta[i])) * prod_p + cis(T(-g_->basis.beta[i])) * prod_m;
      fourier = fourier + T(g_->basis.w[i]) * pair;
      mag += std::abs(g_->basis.w[i]) * 2.0 * std::hypot(val(prod_p.re), val(prod_p.im));
    }
    const double ampg = std::sqrt(2.0 / double(nbg));
    fourier = (g_->basis.sigma * T(0.5 * ampg)) * fourier;
    mag *= std::abs(val(g_->basis.sigma)) * 0.5 * ampg;
    const double resid = std::abs(val(fourier.im));
    const double scale = std::abs(val(fourier.re)) + mag + 1e-300;
    if (!(resid <= 1e-9 * scale) || !std::isfinite(val(fourier.re)))
      throw NumericInconsistency("TermEvaluator: imaginary residual or non-finite value");

    // Matheron half
    const std::size_t nl = g_->z_levels.size();
    std::vector<T> axis(nl, T(0.0));
    const T expt2 = exp(i2b_t2_ * T(t * t));
    for (std::size_t l = 0; l < nl; ++l) {
      T fsum(0.0);
      for (std::size_t m = 0; m < nbu; ++m) {
        const Cplx<T>& e = em[m];
        const Cplx<T>& sh = i2a_cis_(l, m);
        // Re(cis(th2 t + beta) * cis(-th2 shift))
        fsum += T(u_->basis.w[m]) * i2a_amp_(l, m) * (e.re * sh.re - e.im * sh.im);
      }
      T msum(0.0);
      for (std::size_t n = 0; n < mu; ++n)
        msum += u_->q[n] * exp(i2b_t1_(l, n) * T(t) + i2b_t0_(l, n));
      axis[l] = four_amp * fsum + s2u * i2b_pref_ * expt2 * msum;
    }
    const T sg2 = g_->kernel.sigma * g_->kernel.sigma;
    T matheron(0.0);
    for (std::size_t j = 0; j < g_->m(); ++j) {
      T prod = axis[g_->z_level_idx[j * c]];
      for (std::size_t i = 1; i < c; ++i) prod *= axis[g_->z_level_idx[j * c + i]];
      matheron += g_->q[j] * prod;
    }
    return fourier.re + sg2 * matheron;
  }

 private:
  const ExplicitPath<T>* u_;
  const ExplicitPath<T>* g_;
  Mat<T> gm_, gp_;
  std::vector<Cplx<T>> beta_cis_;
  Vec<T> f_ij_, tfreq_;
  Mat<Cplx<T>> zphase_;
  T r_coef_;
  Mat<T> i2a_amp_;
  Mat<Cplx<T>> i2a_cis_;
  T i2b_pref_, i2b_t2_;
  Mat<T> i2b_t1_, i2b_t0_;
};

// One evaluator per order, sharing the input path.
template <class T>
class OutputSampleEvaluator {
 public:
  OutputSampleEvaluator(const ExplicitPath<T>* u, const std::vector<ExplicitPath<T>>* filters) {
    terms_.reserve(filters->size());
    for (const auto& g : *filters) terms_.emplace_back(u, &g);
  }

  T operator()(double t) const {
    T acc(0.0);
    for (const auto& term : terms_) acc += term(t);
    return acc;
  }

 private:
  std::vector<TermEvaluator<T>> terms_;
};

}  // namespace nvkm
