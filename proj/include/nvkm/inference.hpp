#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nvkm/data.hpp"
#include "nvkm/model.hpp"
#include "nvkm/params.hpp"
#include "nvkm/volterra.hpp"

namespace nvkm {

struct TrainingConfig {
  int s_train = 10;       // samples per ELBO estimate
  int s_eval = 50;        // samples for evaluation-time prediction
  int batch_size = 80;
  int io_batch_size = 0;  // 0 -> batch_size
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs_phase1 = 50;
  int epochs_phase2 = 20;
  std::uint64_t seed = 0;
  bool io_mode = false;
};

struct TraceEntry {
  long step = 0;
  int phase = 1;
  double elbo = 0.0;
  double wall_s = 0.0;
};

struct TrainTrace {
  std::vector<TraceEntry> steps;
  VecD noise_after_phase1;  // sigma_y (+ sigma_x)
  VecD noise_after_phase2;
  bool aborted = false;
  std::string abort_reason;
};

struct BatchItem {
  int d = 0;
  std::size_t i = 0;
};

// Fixed random draws for one ELBO estimate: everything stochastic is drawn
// up front so value, gradient, and finite differences share the same noise.
struct PathDrawSet {
  BasisDraws basis;
  VecD eps_v;
};

struct SampleDraws {
  PathDrawSet u;
  std::vector<PathDrawSet> vks;  // d-major, matching model.vks
};

struct StepDraws {
  std::vector<SampleDraws> samples;
};

StepDraws make_step_draws(const VolterraModel& m, int s, Rng& rng);

std::vector<BatchItem> draw_batch(const TimeSeriesDataset& ds, int batch_size, Rng& rng);
std::vector<std::size_t> draw_input_batch(const TimeSeriesDataset& ds, int batch_size, Rng& rng);

// Paths for one Monte-Carlo sample of the model.
template <class T>
struct SamplePaths {
  ExplicitPath<T> u;
  std::vector<std::vector<ExplicitPath<T>>> filters;  // [d][c-1]
};

// Per-step shared state: parameter view and prior-Gram Cholesky factors.
template <class T>
struct PreparedModel {
  ModelView<T> view;
  Mat<T> gram_l_u;
  std::vector<Mat<T>> gram_l_vk;
};

template <class T>
PreparedModel<T> prepare_model(const VolterraModel& m, const std::vector<T>& leaves) {
  PreparedModel<T> p;
  p.view = build_view(m, leaves);
  {
    const T j = T(m.jitter_rel) * p.view.input_kernel.sigma * p.view.input_kernel.sigma;
    Mat<T> g = gram_se(*p.view.z_u, p.view.input_kernel, 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += j;
    if (!try_cholesky(g)) throw IllConditionedGram("prepare_model: input gram");
    p.gram_l_u = std::move(g);
  }
  for (const auto& vk : p.view.vks) {
    const T j = T(m.jitter_rel) * vk.kernel.sigma * vk.kernel.sigma;
    Mat<T> g = gram_se(*vk.z, vk.kernel, 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += j;
    if (!try_cholesky(g)) throw IllConditionedGram("prepare_model: vk gram");
    p.gram_l_vk.push_back(std::move(g));
  }
  return p;
}

template <class T>
T kl_total_view(const PreparedModel<T>& p) {
  T acc = kl_from_cholesky(p.view.mu_u, p.view.l_u, p.gram_l_u);
  for (std::size_t i = 0; i < p.view.vks.size(); ++i)
    acc += kl_from_cholesky(p.view.vks[i].mu, p.view.vks[i].l, p.gram_l_vk[i]);
  return acc;
}

template <class T>
SamplePaths<T> build_sample_paths(const VolterraModel& m, const PreparedModel<T>& p,
                                  const SampleDraws& d) {
  SamplePaths<T> s;
  const Vec<T> vu = inducing_from_eps(p.view.mu_u, p.view.l_u, d.u.eps_v);
  s.u = make_conditioned_path(p.view.input_kernel, 0.0, *p.view.z_u, vu, d.u.basis, p.gram_l_u);
  s.filters.resize(std::size_t(m.D));
  for (int dd = 0; dd < m.D; ++dd) {
    for (int c = 1; c <= m.C; ++c) {
      const std::size_t k = std::size_t(dd) * m.C + std::size_t(c - 1);
      const auto& w = p.view.vks[k];
      const Vec<T> vg = inducing_from_eps(w.mu, w.l, d.vks[k].eps_v);
      s.filters[std::size_t(dd)].push_back(
          make_conditioned_path(w.kernel, w.alpha, *w.z, vg, d.vks[k].basis, p.gram_l_vk[k]));
    }
  }
  return s;
}

template <class T>
T log_normal_pdf(const T& x, const T& mean, const T& sigma) {
  using std::log;
  const T r = (x - mean) / sigma;
  return T(-0.918938533204672741780329736406) - log(sigma) - T(0.5) * r * r;
}

struct GradResult {
  double value = 0.0;
  VecD grad;
};

// Stochastic ELBO built from one fixed draw set. `leaves` is the flattened
// unconstrained parameter vector.
double elbo_from_leaves(const VolterraModel& m, const VecD& leaves, const TimeSeriesDataset& ds,
                        const std::vector<BatchItem>& batch,
                        const std::vector<std::size_t>& io_batch, const StepDraws& draws);

double elbo_estimate(const VolterraModel& m, const TimeSeriesDataset& ds,
                     const std::vector<BatchItem>& batch,
                     const std::vector<std::size_t>& io_batch, int s, Rng& rng);

// Reverse-mode gradient of the same estimate under the same draws. Entries
// for frozen leaves are zeroed when freeze_noise is set.
GradResult grad_elbo_from_leaves(const VolterraModel& m, const VecD& leaves,
                                 const TimeSeriesDataset& ds, const std::vector<BatchItem>& batch,
                                 const std::vector<std::size_t>& io_batch, const StepDraws& draws,
                                 bool freeze_noise);

GradResult grad_elbo(const VolterraModel& m, const TimeSeriesDataset& ds,
                     const std::vector<BatchItem>& batch,
                     const std::vector<std::size_t>& io_batch, int s, Rng& rng,
                     bool freeze_noise = true);

struct AdamHyper {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  VecD m, v;
  long t = 0;
};

// Standard Adam minimization step with bias correction.
void adam_step(VecD& params, const VecD& grad, AdamState& state, const AdamHyper& hyper);

struct TrainResult {
  VolterraModel model;
  TrainTrace trace;
};

TrainResult train(const VolterraModel& m, const TimeSeriesDataset& ds, const TrainingConfig& cfg);

struct PredictiveSummary {
  std::vector<VecD> mean;      // per output
  std::vector<VecD> sd_f;      // sample sd, function only
  std::vector<VecD> sd_total;  // inflated by observation noise in quadrature
  std::vector<MatD> samples;   // per output, S x n
};

PredictiveSummary predict(const VolterraModel& m, const std::vector<VecD>& times, int s, Rng& rng);

// Posterior draws of the input process at given times (S x n).
MatD predict_input(const VolterraModel& m, const VecD& times, int s, Rng& rng);

void write_trace(const TrainTrace& trace, const std::string& path);

}  // namespace nvkm
