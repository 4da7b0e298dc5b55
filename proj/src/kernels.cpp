#include "nvkm/kernels.hpp"

namespace nvkm {

VecD spectral_sample(const SeKernel& k, std::size_t dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("spectral_sample: dim must be >= 1");
  const double sd = std::sqrt(2.0 * k.p);
  VecD theta(dim);
  for (auto& x : theta) x = sd * rng.normal();
  return theta;
}

MatD gram(const MatD& points, const CovFn& cov, double jitter) {
  if (points.rows() == 0) throw std::invalid_argument("gram: no points");
  const std::size_t m = points.rows(), dim = points.cols();
  MatD k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = cov(points.row_ptr(i), points.row_ptr(j), dim);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += jitter;
  }
  return k;
}

double select_se_jitter(const MatD& points, double sigma, double p, double jitter0,
                        double cap_rel) {
  const double s2 = sigma * sigma;
  const double cap = cap_rel * s2;
  double j = jitter0;
  for (;;) {
    MatD k = gram_se<double>(points, {sigma, p}, j);
    if (try_cholesky(k)) return j;
    if (j <= 0.0 || j * 10.0 > cap)
      throw IllConditionedGram("gram not factorizable at jitter " + std::to_string(j) +
                               " (cap " + std::to_string(cap) + ")");
    j *= 10.0;
  }
}

GramChol gram_cholesky(const MatD& points, const CovFn& cov, double jitter0, double jitter_cap) {
  double j = jitter0;
  for (;;) {
    MatD k = gram(points, cov, j);
    MatD l = k;
    if (try_cholesky(l)) return {std::move(k), std::move(l), j};
    if (j <= 0.0 || j * 10.0 > jitter_cap)
      throw IllConditionedGram("gram not factorizable at jitter " + std::to_string(j));
    j *= 10.0;
  }
}

GramChol gram_cholesky_se(const MatD& points, const SeKernel& k, double jitter0) {
  const double j = select_se_jitter(points, k.sigma, k.p, jitter0);
  MatD g = gram_se<double>(points, {k.sigma, k.p}, j);
  MatD l = g;
  if (!try_cholesky(l)) throw IllConditionedGram("gram_cholesky_se: factorization failed");
  return {std::move(g), std::move(l), j};
}

}  // namespace nvkm
