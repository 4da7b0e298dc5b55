#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "nvkm/errors.hpp"
#include "nvkm/linalg.hpp"
#include "nvkm/rng.hpp"

namespace nvkm {

// Squared exponential k(t,t') = sigma^2 exp(-p ||t-t'||^2), with precision
// p = 1 / (2 l^2) for length scale l.
struct SeKernel {
  double sigma = 1.0;
  double p = 1.0;
};

// Decaying squared exponential
// k(t,t') = sigma^2 exp(-alpha(||t||^2 + ||t'||^2) - gamma ||t-t'||^2),
// gamma = 1 / l^2.
struct DseKernel {
  double sigma = 1.0;
  double alpha = 1.0;
  double gamma = 1.0;
};

inline double se_length_scale_to_p(double l) { return 1.0 / (2.0 * l * l); }

// Scalar-generic kernel parameters used wherever gradients flow.
template <class T>
struct SeParams {
  T sigma;
  T p;
};

namespace detail {
inline void check_dims(std::size_t a, std::size_t b, const char* where) {
  if (a != b)
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
}
}  // namespace detail

template <class T>
T se_cov_generic(const double* a, const double* b, std::size_t dim, const SeParams<T>& k) {
  using std::exp;
  double r2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    r2 += d * d;
  }
  return k.sigma * k.sigma * exp(-k.p * r2);
}

inline double se_cov(const VecD& t, const VecD& tp, const SeKernel& k) {
  detail::check_dims(t.size(), tp.size(), "se_cov");
  return se_cov_generic<double>(t.data(), tp.data(), t.size(), {k.sigma, k.p});
}

inline double dse_cov(const VecD& t, const VecD& tp, const DseKernel& k) {
  detail::check_dims(t.size(), tp.size(), "dse_cov");
  double n2 = 0.0, np2 = 0.0, r2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    n2 += t[i] * t[i];
    np2 += tp[i] * tp[i];
    const double d = t[i] - tp[i];
    r2 += d * d;
  }
  return k.sigma * k.sigma * std::exp(-k.alpha * (n2 + np2) - k.gamma * r2);
}

// One draw from the spectral density of the SE covariance. For
// k(r) = sigma^2 exp(-p r^2) the normalized spectral density is Gaussian
// with variance 2p per coordinate: E[cos(theta^T r)] = exp(-p ||r||^2).
VecD spectral_sample(const SeKernel& k, std::size_t dim, Rng& rng);

using CovFn = std::function<double(const double*, const double*, std::size_t)>;

// K[m][n] = cov(z_m, z_n) + jitter [m == n]. Points are rows of `points`.
MatD gram(const MatD& points, const CovFn& cov, double jitter);

template <class T>
Mat<T> gram_se(const MatD& points, const SeParams<T>& kp, double jitter) {
  const std::size_t m = points.rows(), dim = points.cols();
  Mat<T> k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const T v = se_cov_generic(points.row_ptr(i), points.row_ptr(j), dim, kp);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += T(jitter);
  }
  return k;
}

// Finds the smallest jitter in {jitter0, 10 jitter0, ...} <= cap for which the
// SE Gram of `points` factorizes. Decided on plain doubles so that gradient
// tapes only ever record one successful factorization.
double select_se_jitter(const MatD& points, double sigma, double p, double jitter0,
                        double cap_rel = 1e-4);

struct GramChol {
  MatD k;       // jittered Gram
  MatD l;       // lower Cholesky factor
  double jitter = 0.0;
};

// Gram + Cholesky with jitter escalation per the gram contract.
GramChol gram_cholesky(const MatD& points, const CovFn& cov, double jitter0, double jitter_cap);

GramChol gram_cholesky_se(const MatD& points, const SeKernel& k, double jitter0);

}  // namespace nvkm
