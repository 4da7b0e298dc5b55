#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nvkm/ad.hpp"

// Small dense linear algebra, templated on scalar type so the same routines
// run on double and ad::Var. Matrices here are at most a few hundred rows.

namespace nvkm {

template <class T>
using Vec = std::vector<T>;

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, T fill = T(0.0))
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }

  const T* row_ptr(std::size_t r) const { return d_.data() + r * cols_; }
  T* row_ptr(std::size_t r) { return d_.data() + r * cols_; }

  std::vector<T>& data() { return d_; }
  const std::vector<T>& data() const { return d_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> d_;
};

using MatD = Mat<double>;
using VecD = Vec<double>;

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  T s(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
Vec<T> matvec(const Mat<T>& m, const Vec<T>& x) {
  Vec<T> y(m.rows(), T(0.0));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    T s(0.0);
    for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

// In-place lower Cholesky K = L L^T, using only the lower triangle.
// Returns false when a pivot is non-positive, non-finite, or negligible
// relative to the largest diagonal entry.
template <class T>
bool try_cholesky(Mat<T>& a) {
  using std::sqrt;
  const std::size_t n = a.rows();
  double diag_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(val(a(i, i))));
  if (!(diag_scale > 0.0) || !std::isfinite(diag_scale)) return false;
  for (std::size_t j = 0; j < n; ++j) {
    T pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= a(j, k) * a(j, k);
    const double pv = val(pivot);
    if (!(pv > 1e-13 * diag_scale) || !std::isfinite(pv)) return false;
    const T root = sqrt(pivot);
    a(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / root;
    }
    for (std::size_t c = j + 1; c < n; ++c) a(j, c) = T(0.0);
  }
  return true;
}

// L y = b
template <class T>
Vec<T> solve_lower(const Mat<T>& l, const Vec<T>& b) {
  const std::size_t n = l.rows();
  Vec<T> y(n, T(0.0));
  for (std::size_t i = 0; i < n; ++i) {
    T s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  return y;
}

// L^T x = b
template <class T>
Vec<T> solve_lower_transpose(const Mat<T>& l, const Vec<T>& b) {
  const std::size_t n = l.rows();
  Vec<T> x(n, T(0.0));
  for (std::size_t i = n; i-- > 0;) {
    T s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

// (L L^T) x = b
template <class T>
Vec<T> cholesky_solve(const Mat<T>& l, const Vec<T>& b) {
  return solve_lower_transpose(l, solve_lower(l, b));
}

template <class T>
T log_det_from_cholesky(const Mat<T>& l) {
  using std::log;
  T s(0.0);
  for (std::size_t i = 0; i < l.rows(); ++i) s += log(l(i, i));
  return s + s;
}

}  // namespace nvkm
