#pragma once

#include <cstddef>
#include <vector>

#include "nvkm/ad.hpp"
#include "nvkm/model.hpp"

// Canonical flattening of the trainable parameters into one unconstrained
// vector: positives are stored as logs, Cholesky factors as packed lower
// triangles with log diagonals. Layout:
//   log sigma_u | mu_u | packed L_u |
//   per (d, c):  log sigma_g, log length_scale, mu, packed L |
//   log sigma_y (D) | log sigma_x (io only)

namespace nvkm {

inline std::size_t packed_lower_size(std::size_t m) { return m * (m + 1) / 2; }

struct ParamLayout {
  std::size_t total = 0;
  std::vector<std::size_t> noise_indices;  // log sigma_y entries (+ log sigma_x)

  static ParamLayout of(const VolterraModel& m) {
    ParamLayout l;
    std::size_t n = 1 + m.input.m() + packed_lower_size(m.input.m());
    for (const auto& vk : m.vks) n += 2 + vk.m() + packed_lower_size(vk.m());
    for (int d = 0; d < m.D; ++d) l.noise_indices.push_back(n + std::size_t(d));
    n += std::size_t(m.D);
    if (m.io_mode) {
      l.noise_indices.push_back(n);
      n += 1;
    }
    l.total = n;
    return l;
  }
};

namespace detail {
inline void pack_lower(const MatD& l, VecD& out) {
  for (std::size_t i = 0; i < l.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) out.push_back(l(i, j));
    out.push_back(std::log(l(i, i)));
  }
}
inline void unpack_lower(const VecD& x, std::size_t& pos, MatD& l) {
  for (std::size_t i = 0; i < l.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = x[pos++];
    l(i, i) = std::exp(x[pos++]);
    for (std::size_t j = i + 1; j < l.rows(); ++j) l(i, j) = 0.0;
  }
}
}  // namespace detail

inline VecD flatten(const VolterraModel& m) {
  VecD x;
  x.reserve(ParamLayout::of(m).total);
  x.push_back(std::log(m.input.sigma_u));
  x.insert(x.end(), m.input.q.mu.begin(), m.input.q.mu.end());
  detail::pack_lower(m.input.q.l, x);
  for (const auto& vk : m.vks) {
    x.push_back(std::log(vk.sigma_g));
    x.push_back(std::log(vk.length_scale));
    x.insert(x.end(), vk.q.mu.begin(), vk.q.mu.end());
    detail::pack_lower(vk.q.l, x);
  }
  for (double s : m.sigma_y) x.push_back(std::log(s));
  if (m.io_mode) x.push_back(std::log(m.sigma_x));
  return x;
}

inline void unflatten(VolterraModel& m, const VecD& x) {
  std::size_t pos = 0;
  m.input.sigma_u = std::exp(x[pos++]);
  for (auto& v : m.input.q.mu) v = x[pos++];
  detail::unpack_lower(x, pos, m.input.q.l);
  for (auto& vk : m.vks) {
    vk.sigma_g = std::exp(x[pos++]);
    vk.length_scale = std::exp(x[pos++]);
    for (auto& v : vk.q.mu) v = x[pos++];
    detail::unpack_lower(x, pos, vk.q.l);
  }
  for (auto& s : m.sigma_y) s = std::exp(x[pos++]);
  if (m.io_mode) m.sigma_x = std::exp(x[pos++]);
}

// Scalar-generic view of the model parameters built from a leaf vector laid
// out as above; shapes and the fixed quantities come from the model.
template <class T>
struct VkView {
  SeParams<T> kernel;  // sigma_g, p_g
  Vec<T> mu;
  Mat<T> l;
  double alpha = 0.0;
  const MatD* z = nullptr;
};

template <class T>
struct ModelView {
  SeParams<T> input_kernel;  // sigma_u, fixed p_u
  Vec<T> mu_u;
  Mat<T> l_u;
  const MatD* z_u = nullptr;
  std::vector<VkView<T>> vks;
  Vec<T> sigma_y;
  T sigma_x;
};

namespace detail {
template <class T>
void view_unpack_lower(const std::vector<T>& x, std::size_t& pos, Mat<T>& l) {
  using std::exp;
  for (std::size_t i = 0; i < l.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = x[pos++];
    l(i, i) = exp(x[pos++]);
    for (std::size_t j = i + 1; j < l.rows(); ++j) l(i, j) = T(0.0);
  }
}
}  // namespace detail

template <class T>
ModelView<T> build_view(const VolterraModel& m, const std::vector<T>& x) {
  using std::exp;
  ModelView<T> v;
  std::size_t pos = 0;
  v.input_kernel.sigma = exp(x[pos++]);
  v.input_kernel.p = T(m.input.p_u);
  v.mu_u.assign(x.begin() + pos, x.begin() + pos + m.input.m());
  pos += m.input.m();
  v.l_u = Mat<T>(m.input.m(), m.input.m());
  detail::view_unpack_lower(x, pos, v.l_u);
  v.z_u = &m.input.z;
  for (const auto& vk : m.vks) {
    VkView<T> w;
    w.kernel.sigma = exp(x[pos++]);
    const T l = exp(x[pos++]);
    w.kernel.p = T(0.5) / (l * l);
    w.mu.assign(x.begin() + pos, x.begin() + pos + vk.m());
    pos += vk.m();
    w.l = Mat<T>(vk.m(), vk.m());
    detail::view_unpack_lower(x, pos, w.l);
    w.alpha = vk.alpha;
    w.z = &vk.z;
    v.vks.push_back(std::move(w));
  }
  v.sigma_y.resize(std::size_t(m.D));
  for (int d = 0; d < m.D; ++d) v.sigma_y[std::size_t(d)] = exp(x[pos++]);
  v.sigma_x = m.io_mode ? exp(x[pos++]) : T(m.sigma_x);
  return v;
}

// KL[N(mu, L L^T) || N(0, K)] from a pre-factorized prior Gram.
template <class T>
T kl_from_cholesky(const Vec<T>& mu, const Mat<T>& l, const Mat<T>& gram_l) {
  using std::log;
  const std::size_t m = mu.size();
  const T logdet_k = log_det_from_cholesky(gram_l);
  T logdet_s(0.0);
  for (std::size_t i = 0; i < m; ++i) logdet_s += T(2.0) * log(l(i, i));
  T trace(0.0);
  Vec<T> col(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < m; ++r) col[r] = l(r, c);
    const Vec<T> y = solve_lower(gram_l, col);
    for (const T& v : y) trace += v * v;
  }
  const Vec<T> w = solve_lower(gram_l, mu);
  T quad(0.0);
  for (const T& v : w) quad += v * v;
  return T(0.5) * (logdet_k - logdet_s - T(double(m)) + trace + quad);
}

}  // namespace nvkm
