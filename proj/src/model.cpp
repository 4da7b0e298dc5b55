#include "nvkm/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "nvkm/errors.hpp"

namespace nvkm {

using nlohmann::json;

MatD vk_tensor_grid(double range, int axis_points, int order) {
  if (axis_points < 1 || order < 1) throw std::invalid_argument("vk_tensor_grid: bad sizes");
  std::size_t m = 1;
  for (int i = 0; i < order; ++i) m *= std::size_t(axis_points);
  MatD z(m, std::size_t(order));
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t rem = j;
    for (int i = 0; i < order; ++i) {
      const std::size_t digit = rem % std::size_t(axis_points);
      rem /= std::size_t(axis_points);
      z(j, std::size_t(i)) =
          axis_points == 1 ? 0.0 : -range + 2.0 * range * double(digit) / double(axis_points - 1);
    }
  }
  return z;
}

namespace {

constexpr int kDefaultAxisSizes[4] = {15, 10, 6, 4};

VariationalGaussian init_variational(const MatD& z, const SeKernel& k, double jitter_rel,
                                     double mean_sd, double chol_scale, Rng& rng) {
  const auto gc = gram_cholesky_se(z, k, jitter_rel * k.sigma * k.sigma);
  VariationalGaussian q;
  q.mu.resize(z.rows());
  for (auto& x : q.mu) x = mean_sd * rng.normal();
  q.l = gc.l;
  for (auto& x : q.l.data()) x *= chol_scale;
  return q;
}

}  // namespace

VolterraModel init_model(const ModelConfig& cfg, const DataSummary& data, std::uint64_t seed) {
  if (cfg.C < 1 || cfg.D < 1) throw std::invalid_argument("init_model: C and D must be >= 1");
  if (cfg.vk_range.empty()) throw std::invalid_argument("init_model: vk_range empty");
  for (int c = 1; c <= cfg.C; ++c) {
    const bool have_override = int(cfg.axis_sizes.size()) >= c && cfg.axis_sizes[c - 1] > 0;
    if (c > 4 && !have_override)
      throw UnsupportedOrder("init_model: no grid axis size defined for order " +
                             std::to_string(c));
  }

  VolterraModel m;
  m.C = cfg.C;
  m.D = cfg.D;
  m.io_mode = cfg.io_mode;
  m.n_basis = cfg.n_basis;
  m.eps_decay = cfg.eps_decay;
  m.jitter_rel = cfg.jitter_rel;
  m.seed = seed;
  Rng rng(splitmix64(seed ^ 0x6d6f64656cULL));

  // input process: grid over the observed span, length scale tied to spacing
  std::size_t mu = cfg.m_u > 0
                       ? std::size_t(cfg.m_u)
                       : std::size_t(std::max(2.0, std::round(data.n_avg * cfg.input_points_fraction)));
  if (mu < 2) mu = 2;
  m.input.z = MatD(mu, 1);
  for (std::size_t i = 0; i < mu; ++i)
    m.input.z(i, 0) = data.t_min + (data.t_max - data.t_min) * double(i) / double(mu - 1);
  const double dz = (data.t_max - data.t_min) / double(mu - 1);
  const double lu = cfg.input_lengthscale_factor * dz;
  m.input.p_u = se_length_scale_to_p(lu);
  m.input.sigma_u = cfg.input_amplitude_init;
  m.input.q = init_variational(m.input.z, SeKernel{m.input.sigma_u, m.input.p_u}, cfg.jitter_rel,
                               cfg.mean_init_sd, cfg.chol_init_scale, rng);

  for (int d = 0; d < cfg.D; ++d) {
    for (int c = 1; c <= cfg.C; ++c) {
      VolterraKernelSpec vk;
      vk.order = c;
      vk.range = cfg.vk_range[std::min<std::size_t>(std::size_t(c) - 1, cfg.vk_range.size() - 1)];
      vk.alpha = fix_alpha(vk.range, cfg.eps_decay);
      const int axis = int(cfg.axis_sizes.size()) >= c && cfg.axis_sizes[c - 1] > 0
                           ? cfg.axis_sizes[c - 1]
                           : kDefaultAxisSizes[c - 1];
      vk.z = vk_tensor_grid(vk.range, axis, c);
      const double spacing = axis > 1 ? 2.0 * vk.range / double(axis - 1) : vk.range;
      vk.length_scale = cfg.vk_lengthscale_factor * spacing;
      vk.sigma_g = cfg.vk_amplitude_init;
      vk.q = init_variational(vk.z, SeKernel{vk.sigma_g, vk.p_g()}, cfg.jitter_rel,
                              cfg.mean_init_sd, cfg.chol_init_scale, rng);
      m.vks.push_back(std::move(vk));
    }
  }

  m.sigma_y.assign(std::size_t(cfg.D), cfg.sigma_y_init);
  m.sigma_x = cfg.sigma_x_init;
  m.standardize_shift.assign(std::size_t(cfg.D), 0.0);
  m.standardize_scale.assign(std::size_t(cfg.D), 1.0);
  return m;
}

double kl_term(const VariationalGaussian& q, const MatD& prior_gram) {
  const std::size_t m = q.m();
  if (prior_gram.rows() != m) throw std::invalid_argument("kl_term: dimension mismatch");
  MatD lk = prior_gram;
  if (!try_cholesky(lk)) throw IllConditionedGram("kl_term: prior gram not factorizable");

  const double logdet_k = log_det_from_cholesky(lk);
  double logdet_s = 0.0;
  for (std::size_t i = 0; i < m; ++i) logdet_s += 2.0 * std::log(q.l(i, i));

  // tr(K^{-1} L L^T) = ||Lk^{-1} L||_F^2
  double trace = 0.0;
  VecD col(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < m; ++r) col[r] = q.l(r, c);
    const VecD y = solve_lower(lk, col);
    for (double v : y) trace += v * v;
  }
  const VecD w = solve_lower(lk, q.mu);
  double quad = 0.0;
  for (double v : w) quad += v * v;

  return 0.5 * (logdet_k - logdet_s - double(m) + trace + quad);
}

double total_kl(const VolterraModel& m) {
  const auto gu = gram_se<double>(m.input.z, {m.input.sigma_u, m.input.p_u},
                                  m.jitter_rel * m.input.sigma_u * m.input.sigma_u);
  double acc = kl_term(m.input.q, gu);
  for (const auto& vk : m.vks) {
    const auto g = gram_se<double>(vk.z, {vk.sigma_g, vk.p_g()},
                                   m.jitter_rel * vk.sigma_g * vk.sigma_g);
    acc += kl_term(vk.q, g);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "NVKMCKP1", u64 little-endian header length, JSON
// header (structure, shapes, named scalar and array manifests, config echo),
// then raw little-endian f64 arrays in manifest order.

namespace {

constexpr char kMagic[8] = {'N', 'V', 'K', 'M', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& os, const double* p, std::size_t n) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}

void get_f64s(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n * 8));
  if (!is) throw ParseError("checkpoint: truncated array data");
}

}  // namespace

void checkpoint_save(const VolterraModel& m, const std::string& path) {
  json hdr;
  hdr["format"] = "nvkm-checkpoint";
  hdr["version"] = 1;
  hdr["C"] = m.C;
  hdr["D"] = m.D;
  hdr["io_mode"] = m.io_mode;
  hdr["n_basis"] = m.n_basis;
  hdr["seed"] = m.seed;
  hdr["config_echo"] = m.config_echo;

  std::vector<std::pair<std::string, const MatD*>> mats;
  std::vector<std::pair<std::string, const VecD*>> vecs;
  json arrays = json::array();
  auto add_mat = [&](const std::string& name, const MatD& a) {
    arrays.push_back({{"name", name}, {"rows", a.rows()}, {"cols", a.cols()}});
    mats.emplace_back(name, &a);
  };
  auto add_vec = [&](const std::string& name, const VecD& a) {
    arrays.push_back({{"name", name}, {"rows", a.size()}, {"cols", 1}});
    vecs.emplace_back(name, &a);
  };

  VecD scalars = {double(m.eps_decay), m.jitter_rel,      m.input.sigma_u, m.input.p_u,
                  m.sigma_x,           double(m.input.m()), m.input_shift,   m.input_scale};
  json scalar_names = {"eps_decay", "jitter_rel", "sigma_u", "p_u",
                       "sigma_x",   "m_u",        "input_shift", "input_scale"};
  hdr["scalar_names"] = scalar_names;
  add_vec("scalars", scalars);
  add_vec("sigma_y", m.sigma_y);
  add_vec("standardize_shift", m.standardize_shift);
  add_vec("standardize_scale", m.standardize_scale);
  add_mat("z_u", m.input.z);
  add_vec("mu_u", m.input.q.mu);
  add_mat("L_u", m.input.q.l);

  VecD vk_scalars;
  for (const auto& vk : m.vks) {
    vk_scalars.push_back(double(vk.order));
    vk_scalars.push_back(vk.range);
    vk_scalars.push_back(vk.alpha);
    vk_scalars.push_back(vk.sigma_g);
    vk_scalars.push_back(vk.length_scale);
  }
  add_vec("vk_scalars", vk_scalars);
  for (std::size_t i = 0; i < m.vks.size(); ++i) {
    add_mat("vk" + std::to_string(i) + "_z", m.vks[i].z);
    add_vec("vk" + std::to_string(i) + "_mu", m.vks[i].q.mu);
    add_mat("vk" + std::to_string(i) + "_L", m.vks[i].q.l);
  }
  hdr["arrays"] = arrays;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint_save: cannot open " + path);
  os.write(kMagic, 8);
  const std::string htext = hdr.dump();
  put_u64(os, htext.size());
  os.write(htext.data(), std::streamsize(htext.size()));
  std::size_t mi = 0, vi = 0;
  for (const auto& a : arrays) {
    const std::string name = a["name"];
    if (mi < mats.size() && mats[mi].first == name) {
      put_f64s(os, mats[mi].second->data().data(), mats[mi].second->data().size());
      ++mi;
    } else {
      put_f64s(os, vecs[vi].second->data(), vecs[vi].second->size());
      ++vi;
    }
  }
  if (!os) throw std::runtime_error("checkpoint_save: write failed for " + path);
}

VolterraModel checkpoint_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint_load: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IncompatibleCheckpoint("checkpoint_load: bad magic in " + path);
  const std::uint64_t hlen = get_u64(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), std::streamsize(hlen));
  if (!is) throw ParseError("checkpoint_load: truncated header");
  json hdr;
  try {
    hdr = json::parse(htext);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint_load: header parse failure: ") + e.what());
  }
  if (hdr.value("format", "") != "nvkm-checkpoint" || hdr.value("version", -1) != 1)
    throw IncompatibleCheckpoint("checkpoint_load: unsupported version in " + path);

  std::map<std::string, MatD> data;
  for (const auto& a : hdr["arrays"]) {
    const std::string name = a["name"];
    const std::size_t rows = a["rows"], cols = a["cols"];
    MatD m(rows, cols);
    get_f64s(is, m.data().data(), rows * cols);
    data.emplace(name, std::move(m));
  }
  auto mat = [&](const std::string& n) -> MatD& {
    auto it = data.find(n);
    if (it == data.end()) throw ParseError("checkpoint_load: missing array " + n);
    return it->second;
  };
  auto vec = [&](const std::string& n) {
    return VecD(mat(n).data().begin(), mat(n).data().end());
  };

  VolterraModel m;
  m.C = hdr["C"];
  m.D = hdr["D"];
  m.io_mode = hdr["io_mode"];
  m.n_basis = hdr["n_basis"];
  m.seed = hdr["seed"];
  m.config_echo = hdr.value("config_echo", "");

  const VecD sc = vec("scalars");
  m.eps_decay = sc[0];
  m.jitter_rel = sc[1];
  m.input.sigma_u = sc[2];
  m.input.p_u = sc[3];
  m.sigma_x = sc[4];
  m.input_shift = sc[6];
  m.input_scale = sc[7];
  m.sigma_y = vec("sigma_y");
  m.standardize_shift = vec("standardize_shift");
  m.standardize_scale = vec("standardize_scale");
  m.input.z = mat("z_u");
  m.input.q.mu = vec("mu_u");
  m.input.q.l = mat("L_u");

  const VecD vksc = vec("vk_scalars");
  const std::size_t nvk = std::size_t(m.C) * std::size_t(m.D);
  if (vksc.size() != 5 * nvk) throw ParseError("checkpoint_load: vk scalar block size mismatch");
  for (std::size_t i = 0; i < nvk; ++i) {
    VolterraKernelSpec vk;
    vk.order = int(vksc[5 * i]);
    vk.range = vksc[5 * i + 1];
    vk.alpha = vksc[5 * i + 2];
    vk.sigma_g = vksc[5 * i + 3];
    vk.length_scale = vksc[5 * i + 4];
    vk.z = mat("vk" + std::to_string(i) + "_z");
    vk.q.mu = vec("vk" + std::to_string(i) + "_mu");
    vk.q.l = mat("vk" + std::to_string(i) + "_L");
    m.vks.push_back(std::move(vk));
  }
  return m;
}

}  // namespace nvkm
