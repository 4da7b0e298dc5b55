#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nvkm/kernels.hpp"
#include "nvkm/linalg.hpp"
#include "nvkm/rng.hpp"

// Explicit function-space GP samples: a random Fourier basis for the prior
// part plus a Matheron correction that pins the sample to the inducing
// values. Evaluation is pure and linear in the number of query points.

namespace nvkm {

// Raw standard draws behind a basis, kept separate so the same draws can be
// re-scaled when kernel hyperparameters change under the reparameterization.
struct BasisDraws {
  MatD eps_theta;           // nb x dim, standard normal
  VecD beta;                // nb, uniform [0, 2pi)
  VecD w;                   // nb, standard normal
  std::size_t nb() const { return w.size(); }
};

inline BasisDraws draw_basis_draws(std::size_t dim, std::size_t nb, Rng& rng) {
  if (nb < 1) throw std::invalid_argument("draw_basis_draws: nb must be >= 1");
  BasisDraws d;
  d.eps_theta = MatD(nb, dim);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < dim; ++j) d.eps_theta(i, j) = rng.normal();
  d.beta.resize(nb);
  for (auto& b : d.beta) b = rng.uniform(0.0, 6.283185307179586476925287);
  d.w.resize(nb);
  for (auto& w : d.w) w = rng.normal();
  return d;
}

// phi_i(t) = sigma sqrt(2/nb) cos(theta_i . t + beta_i), theta_i ~ FT(k).
template <class T>
struct FourierBasis {
  Mat<T> theta;             // nb x dim
  VecD beta;                // fixed draws
  VecD w;                   // fixed standard-normal weights
  T sigma;
  std::size_t nb() const { return w.size(); }
  std::size_t dim() const { return theta.cols(); }
};

template <class T>
FourierBasis<T> make_basis(const SeParams<T>& k, const BasisDraws& d) {
  using std::sqrt;
  FourierBasis<T> b;
  const std::size_t nb = d.nb(), dim = d.eps_theta.cols();
  const T sd = sqrt(T(2.0) * k.p);
  b.theta = Mat<T>(nb, dim);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < dim; ++j) b.theta(i, j) = sd * T(d.eps_theta(i, j));
  b.beta = d.beta;
  b.w = d.w;
  b.sigma = k.sigma;
  return b;
}

inline FourierBasis<double> draw_basis(const SeKernel& k, std::size_t dim, std::size_t nb,
                                       Rng& rng) {
  return make_basis<double>({k.sigma, k.p}, draw_basis_draws(dim, nb, rng));
}

template <class T>
T eval_basis(const FourierBasis<T>& b, const double* t) {
  using std::cos;
  using std::sqrt;
  const std::size_t nb = b.nb(), dim = b.dim();
  const double amp = std::sqrt(2.0 / static_cast<double>(nb));
  T acc(0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    T phase(b.beta[i]);
    for (std::size_t j = 0; j < dim; ++j) phase += b.theta(i, j) * T(t[j]);
    acc += T(b.w[i]) * cos(phase);
  }
  return b.sigma * T(amp) * acc;
}

// Feature matrix Phi[j][i] = phi_i(z_j).
template <class T>
Mat<T> feature_matrix(const FourierBasis<T>& b, const MatD& z) {
  using std::cos;
  const std::size_t m = z.rows(), nb = b.nb(), dim = b.dim();
  const double amp = std::sqrt(2.0 / static_cast<double>(nb));
  Mat<T> phi(m, nb);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < nb; ++i) {
      T phase(b.beta[i]);
      for (std::size_t dd = 0; dd < dim; ++dd) phase += b.theta(i, dd) * T(z(j, dd));
      phi(j, i) = b.sigma * T(amp) * cos(phase);
    }
  }
  return phi;
}

// q = K^{-1} (v - Phi w) against a pre-factorized Gram of the inducing inputs.
template <class T>
Vec<T> matheron_from_cholesky(const FourierBasis<T>& b, const MatD& z, const Vec<T>& v,
                              const Mat<T>& gram_l) {
  const std::size_t m = z.rows();
  if (v.size() != m) throw std::invalid_argument("matheron: |v| != |z|");
  const Mat<T> phi = feature_matrix(b, z);
  Vec<T> r(m, T(0.0));
  for (std::size_t j = 0; j < m; ++j) {
    T s(0.0);
    for (std::size_t i = 0; i < b.nb(); ++i) s += phi(j, i) * T(b.w[i]);
    r[j] = v[j] - s;
  }
  return cholesky_solve(gram_l, r);
}

inline VecD matheron_coefficients(const FourierBasis<double>& b, const MatD& z, const VecD& v,
                                  const SeKernel& k, double jitter) {
  MatD g = gram_se<double>(z, {k.sigma, k.p}, jitter);
  if (!try_cholesky(g))
    throw IllConditionedGram("matheron_coefficients: gram not factorizable");
  return matheron_from_cholesky<double>(b, z, v, g);
}

// One GP sample in explicit form. With alpha = 0 this is the plain pathwise
// sample; with alpha > 0 the whole path is multiplied by exp(-alpha ||t||^2),
// turning an SE-covariance sample into a DSE-covariance one.
template <class T>
struct ExplicitPath {
  FourierBasis<T> basis;
  MatD z;                   // M x dim inducing inputs
  Vec<T> q;                 // Matheron coefficients
  SeParams<T> kernel;
  double alpha = 0.0;

  // Distinct scalar entries of z and their index map, used to share
  // per-axis factors when the closed-form integrals product over dimensions.
  VecD z_levels;
  std::vector<int> z_level_idx;  // M*dim entries

  std::size_t m() const { return z.rows(); }
  std::size_t dim() const { return z.cols(); }
};

namespace detail {
inline void build_levels(const MatD& z, VecD& levels, std::vector<int>& idx) {
  levels.assign(z.data().begin(), z.data().end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  idx.resize(z.data().size());
  for (std::size_t i = 0; i < z.data().size(); ++i) {
    idx[i] = static_cast<int>(std::lower_bound(levels.begin(), levels.end(), z.data()[i]) -
                              levels.begin());
  }
}
}  // namespace detail

template <class T>
ExplicitPath<T> make_conditioned_path(const SeParams<T>& k, double alpha, const MatD& z,
                                      const Vec<T>& v, const BasisDraws& draws,
                                      const Mat<T>& gram_l) {
  ExplicitPath<T> p;
  p.basis = make_basis(k, draws);
  p.z = z;
  p.q = matheron_from_cholesky(p.basis, z, v, gram_l);
  p.kernel = k;
  p.alpha = alpha;
  detail::build_levels(z, p.z_levels, p.z_level_idx);
  return p;
}

inline ExplicitPath<double> make_conditioned_path(const SeKernel& k, double alpha, const MatD& z,
                                                  const VecD& v, const BasisDraws& draws,
                                                  double jitter) {
  MatD g = gram_se<double>(z, {k.sigma, k.p}, jitter);
  if (!try_cholesky(g)) throw IllConditionedGram("make_conditioned_path: gram not factorizable");
  return make_conditioned_path<double>({k.sigma, k.p}, alpha, z, v, draws, g);
}

template <class T>
T eval_path(const ExplicitPath<T>& p, const double* t, std::size_t tdim) {
  using std::exp;
  if (tdim != p.dim()) throw std::invalid_argument("eval_path: dimension mismatch");
  T acc = eval_basis(p.basis, t);
  const T s2 = p.kernel.sigma * p.kernel.sigma;
  for (std::size_t j = 0; j < p.m(); ++j) {
    double r2 = 0.0;
    for (std::size_t dd = 0; dd < tdim; ++dd) {
      const double d = t[dd] - p.z(j, dd);
      r2 += d * d;
    }
    acc += p.q[j] * s2 * exp(T(-p.kernel.p) * T(r2));
  }
  if (p.alpha != 0.0) {
    double n2 = 0.0;
    for (std::size_t dd = 0; dd < tdim; ++dd) n2 += t[dd] * t[dd];
    acc = acc * exp(T(-p.alpha * n2));
  }
  return acc;
}

template <class T>
T eval_path(const ExplicitPath<T>& p, const VecD& t) {
  return eval_path(p, t.data(), t.size());
}

inline double eval_path1(const ExplicitPath<double>& p, double t) {
  return eval_path(p, &t, 1);
}

// Inducing-point posterior q(v) = N(mu, L L^T), lower-triangular L with
// positive diagonal.
struct VariationalGaussian {
  VecD mu;
  MatD l;
  std::size_t m() const { return mu.size(); }
};

inline VecD sample_inducing(const VariationalGaussian& q, Rng& rng) {
  VecD eps(q.m());
  for (auto& e : eps) e = rng.normal();
  VecD v = q.mu;
  for (std::size_t i = 0; i < q.m(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += q.l(i, j) * eps[j];
    v[i] += s;
  }
  return v;
}

// Reparameterized draw v = mu + L eps for fixed eps; differentiable in (mu, L).
template <class T>
Vec<T> inducing_from_eps(const Vec<T>& mu, const Mat<T>& l, const VecD& eps) {
  const std::size_t m = mu.size();
  Vec<T> v = mu;
  for (std::size_t i = 0; i < m; ++i) {
    T s(0.0);
    for (std::size_t j = 0; j <= i; ++j) s += l(i, j) * T(eps[j]);
    v[i] += s;
  }
  return v;
}

}  // namespace nvkm
