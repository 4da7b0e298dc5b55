#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvkm/kernels.hpp"
#include "nvkm/linalg.hpp"
#include "nvkm/pathwise.hpp"
#include "nvkm/rng.hpp"

namespace nvkm {

// One Volterra kernel G_{d,c}: tensor inducing grid, variational posterior,
// SE hyperparameters of G', and the fixed decay alpha.
struct VolterraKernelSpec {
  int order = 1;
  double range = 1.0;
  double alpha = 1.0;
  MatD z;                    // M x order, c-fold power of a symmetric axis
  VariationalGaussian q;
  double sigma_g = 1.0;
  double length_scale = 1.0;  // p_g = 1 / (2 l^2)

  double p_g() const { return 1.0 / (2.0 * length_scale * length_scale); }
  std::size_t m() const { return z.rows(); }
};

struct InputProcessSpec {
  MatD z;                    // M_u x 1, spans the observed time range
  VariationalGaussian q;
  double sigma_u = 1.0;
  double p_u = 1.0;          // fixed from grid spacing
  std::size_t m() const { return z.rows(); }
};

struct VolterraModel {
  int C = 1;
  int D = 1;
  bool io_mode = false;
  int n_basis = 50;
  double eps_decay = 0.01;
  double jitter_rel = 1e-8;
  InputProcessSpec input;
  std::vector<VolterraKernelSpec> vks;  // d-major: vks[d * C + (c - 1)]
  VecD sigma_y;                         // one per output
  double sigma_x = 0.05;

  // Per-output standardization applied to the training data (identity when
  // unused); kept with the model so predictions can be mapped back.
  VecD standardize_shift, standardize_scale;
  double input_shift = 0.0, input_scale = 1.0;

  std::uint64_t seed = 0;
  std::string config_echo;

  const VolterraKernelSpec& vk(int d, int c) const { return vks[std::size_t(d) * C + (c - 1)]; }
  VolterraKernelSpec& vk(int d, int c) { return vks[std::size_t(d) * C + (c - 1)]; }
};

struct ModelConfig {
  int C = 1;
  int D = 1;
  std::vector<double> vk_range = {1.0};  // per order; single value broadcasts
  double eps_decay = 0.01;
  int n_basis = 50;
  std::vector<int> axis_sizes;           // override of the per-order defaults
  int m_u = 0;                           // override; default n_avg / 10
  double input_points_fraction = 0.1;
  double input_lengthscale_factor = 1.0;  // x input grid spacing
  double vk_lengthscale_factor = 1.0;     // x VK grid spacing
  double vk_amplitude_init = 1.0;
  double input_amplitude_init = 1.0;
  double mean_init_sd = 0.05;
  double chol_init_scale = 0.1;
  double sigma_y_init = 0.05;
  double sigma_x_init = 0.05;
  double jitter_rel = 1e-8;
  bool io_mode = false;
};

struct DataSummary {
  double t_min = 0.0;
  double t_max = 1.0;
  double n_avg = 100.0;  // average observations per output
};

// alpha = ln(1/eps) / r^2, so exp(-alpha r^2) = eps at the grid edge.
inline double fix_alpha(double range, double eps_decay) {
  return std::log(1.0 / eps_decay) / (range * range);
}

MatD vk_tensor_grid(double range, int axis_points, int order);

VolterraModel init_model(const ModelConfig& cfg, const DataSummary& data, std::uint64_t seed);

// KL[N(mu, L L^T) || N(0, K)] in closed form; >= 0, zero iff q equals the prior.
double kl_term(const VariationalGaussian& q, const MatD& prior_gram);

double total_kl(const VolterraModel& m);

void checkpoint_save(const VolterraModel& m, const std::string& path);
VolterraModel checkpoint_load(const std::string& path);

}  // namespace nvkm
