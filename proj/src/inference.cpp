#include "nvkm/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nvkm/errors.hpp"
#include "nvkm/parallel.hpp"
#include "nvkm/term_eval.hpp"

namespace nvkm {

StepDraws make_step_draws(const VolterraModel& m, int s, Rng& rng) {
  StepDraws d;
  d.samples.resize(std::size_t(s));
  const std::size_t nb = std::size_t(m.n_basis);
  for (auto& sample : d.samples) {
    sample.u.basis = draw_basis_draws(1, nb, rng);
    sample.u.eps_v.resize(m.input.m());
    for (auto& e : sample.u.eps_v) e = rng.normal();
    sample.vks.resize(m.vks.size());
    for (std::size_t k = 0; k < m.vks.size(); ++k) {
      sample.vks[k].basis = draw_basis_draws(std::size_t(m.vks[k].order), nb, rng);
      sample.vks[k].eps_v.resize(m.vks[k].m());
      for (auto& e : sample.vks[k].eps_v) e = rng.normal();
    }
  }
  return d;
}

std::vector<BatchItem> draw_batch(const TimeSeriesDataset& ds, int batch_size, Rng& rng) {
  std::vector<BatchItem> all;
  for (std::size_t d = 0; d < ds.outputs(); ++d)
    for (std::size_t i = 0; i < ds.y[d].size(); ++i) all.push_back({int(d), i});
  if (batch_size <= 0 || std::size_t(batch_size) >= all.size()) return all;
  // partial Fisher-Yates: uniform over ordered subsets of the given size
  for (std::size_t i = 0; i < std::size_t(batch_size); ++i) {
    const std::size_t j = i + std::size_t(rng.below(all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(std::size_t(batch_size));
  return all;
}

std::vector<std::size_t> draw_input_batch(const TimeSeriesDataset& ds, int batch_size, Rng& rng) {
  std::vector<std::size_t> idx(ds.x.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (batch_size <= 0 || std::size_t(batch_size) >= idx.size()) return idx;
  for (std::size_t i = 0; i < std::size_t(batch_size); ++i) {
    const std::size_t j = i + std::size_t(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::size_t(batch_size));
  return idx;
}

namespace {

struct LikWeights {
  double wy = 0.0;  // (N_total / |batch|) / S
  double wx = 0.0;  // (N_x / |io batch|) / S
};

LikWeights lik_weights(const VolterraModel& m, const TimeSeriesDataset& ds, std::size_t batch,
                       std::size_t io_batch, std::size_t s) {
  LikWeights w;
  if (batch > 0) w.wy = double(ds.total_obs()) / double(batch) / double(s);
  if (m.io_mode && io_batch > 0) w.wx = double(ds.x.size()) / double(io_batch) / double(s);
  return w;
}

}  // namespace

double elbo_from_leaves(const VolterraModel& m, const VecD& leaves, const TimeSeriesDataset& ds,
                        const std::vector<BatchItem>& batch,
                        const std::vector<std::size_t>& io_batch, const StepDraws& draws) {
  const auto prep = prepare_model<double>(m, leaves);
  const auto w = lik_weights(m, ds, batch.size(), io_batch.size(), draws.samples.size());
  double lik = 0.0;
  for (const auto& sample : draws.samples) {
    const auto paths = build_sample_paths(m, prep, sample);
    std::vector<OutputSampleEvaluator<double>> evals;
    evals.reserve(paths.filters.size());
    for (std::size_t d = 0; d < paths.filters.size(); ++d)
      evals.emplace_back(&paths.u, &paths.filters[d]);
    double part = 0.0;
    for (const auto& item : batch) {
      const double f = evals[std::size_t(item.d)](ds.t[std::size_t(item.d)][item.i]);
      part += w.wy * log_normal_pdf(ds.y[std::size_t(item.d)][item.i], f,
                                    prep.view.sigma_y[std::size_t(item.d)]);
    }
    if (m.io_mode) {
      for (std::size_t j : io_batch) {
        const double uv = eval_path1(paths.u, ds.tx[j]);
        part += w.wx * log_normal_pdf(ds.x[j], uv, prep.view.sigma_x);
      }
    }
    lik += part;
  }
  return lik - kl_total_view(prep);
}

double elbo_estimate(const VolterraModel& m, const TimeSeriesDataset& ds,
                     const std::vector<BatchItem>& batch,
                     const std::vector<std::size_t>& io_batch, int s, Rng& rng) {
  const StepDraws draws = make_step_draws(m, s, rng);
  return elbo_from_leaves(m, flatten(m), ds, batch, io_batch, draws);
}

GradResult grad_elbo_from_leaves(const VolterraModel& m, const VecD& leaves,
                                 const TimeSeriesDataset& ds, const std::vector<BatchItem>& batch,
                                 const std::vector<std::size_t>& io_batch, const StepDraws& draws,
                                 bool freeze_noise) {
  const std::size_t n_params = leaves.size();
  const std::size_t n_samples = draws.samples.size();
  const auto w = lik_weights(m, ds, batch.size(), io_batch.size(), n_samples);

  // task 0: KL term; tasks 1..S: per-sample likelihood with per-datum
  // checkpointing so tape memory stays bounded.
  std::vector<VecD> task_grad(n_samples + 1);
  std::vector<double> task_val(n_samples + 1, 0.0);
  parallel_for_tasks(n_samples + 1, [&](std::size_t task) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    std::vector<ad::Var> lv;
    lv.reserve(n_params);
    for (double x : leaves) lv.push_back(ad::Var::leaf(x));
    const auto prep = prepare_model<ad::Var>(m, lv);
    double value = 0.0;
    if (task == 0) {
      const ad::Var kl = kl_total_view(prep);
      value = -kl.v;
      tape.seed(kl.i, -1.0);
    } else {
      const auto paths = build_sample_paths(m, prep, draws.samples[task - 1]);
      std::vector<OutputSampleEvaluator<ad::Var>> evals;
      evals.reserve(paths.filters.size());
      for (std::size_t d = 0; d < paths.filters.size(); ++d)
        evals.emplace_back(&paths.u, &paths.filters[d]);
      const std::size_t mark = tape.size();
      for (const auto& item : batch) {
        const ad::Var f = evals[std::size_t(item.d)](ds.t[std::size_t(item.d)][item.i]);
        const ad::Var ll = log_normal_pdf(ad::Var(ds.y[std::size_t(item.d)][item.i]), f,
                                          prep.view.sigma_y[std::size_t(item.d)]);
        value += w.wy * ll.v;
        tape.seed(ll.i, w.wy);
        tape.backward_to(mark);
        tape.truncate(mark);
      }
      if (m.io_mode) {
        for (std::size_t j : io_batch) {
          const ad::Var uv = eval_path(paths.u, &ds.tx[j], 1);
          const ad::Var ll = log_normal_pdf(ad::Var(ds.x[j]), uv, prep.view.sigma_x);
          value += w.wx * ll.v;
          tape.seed(ll.i, w.wx);
          tape.backward_to(mark);
          tape.truncate(mark);
        }
      }
    }
    tape.backward_to(0);
    VecD g(n_params);
    for (std::size_t i = 0; i < n_params; ++i) g[i] = tape.adjoint(lv[i].i);
    task_grad[task] = std::move(g);
    task_val[task] = value;
  });

  GradResult r;
  r.grad.assign(n_params, 0.0);
  for (std::size_t task = 0; task <= n_samples; ++task) {
    r.value += task_val[task];
    for (std::size_t i = 0; i < n_params; ++i) r.grad[i] += task_grad[task][i];
  }
  if (freeze_noise) {
    for (std::size_t idx : ParamLayout::of(m).noise_indices) r.grad[idx] = 0.0;
  }
  return r;
}

GradResult grad_elbo(const VolterraModel& m, const TimeSeriesDataset& ds,
                     const std::vector<BatchItem>& batch,
                     const std::vector<std::size_t>& io_batch, int s, Rng& rng,
                     bool freeze_noise) {
  const StepDraws draws = make_step_draws(m, s, rng);
  return grad_elbo_from_leaves(m, flatten(m), ds, batch, io_batch, draws, freeze_noise);
}

void adam_step(VecD& params, const VecD& grad, AdamState& state, const AdamHyper& hyper) {
  if (params.size() != grad.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i]))
      throw NumericFailure("adam_step: non-finite gradient at index " + std::to_string(i));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

namespace {

// Phase 2: noise-only fit on pre-sampled function values. The objective is
// the S-sample log likelihood of the training set; its gradient in log sigma
// is available in closed form.
struct NoiseFitData {
  std::vector<MatD> f;  // per output: S x N_d samples
  MatD u;               // S x N_x samples (io mode)
};

NoiseFitData presample_for_noise_fit(const VolterraModel& shape, const VecD& leaves,
                                     const TimeSeriesDataset& ds, int s, Rng& rng) {
  NoiseFitData out;
  const StepDraws draws = make_step_draws(shape, s, rng);
  const auto prep = prepare_model<double>(shape, leaves);
  out.f.resize(ds.outputs());
  for (std::size_t d = 0; d < ds.outputs(); ++d) out.f[d] = MatD(std::size_t(s), ds.y[d].size());
  if (shape.io_mode) out.u = MatD(std::size_t(s), ds.x.size());
  parallel_for_tasks(std::size_t(s), [&](std::size_t k) {
    const auto paths = build_sample_paths(shape, prep, draws.samples[k]);
    std::vector<OutputSampleEvaluator<double>> evals;
    for (std::size_t d = 0; d < ds.outputs(); ++d) evals.emplace_back(&paths.u, &paths.filters[d]);
    for (std::size_t d = 0; d < ds.outputs(); ++d)
      for (std::size_t i = 0; i < ds.y[d].size(); ++i) out.f[d](k, i) = evals[d](ds.t[d][i]);
    if (shape.io_mode)
      for (std::size_t j = 0; j < ds.x.size(); ++j) out.u(k, j) = eval_path1(paths.u, ds.tx[j]);
  });
  return out;
}

double noise_objective_and_grad(const NoiseFitData& data, const TimeSeriesDataset& ds,
                                const VecD& log_noise, bool io, VecD* grad) {
  // objective: sum_{d,i} (1/S) sum_s log N(y | f, sigma_d) (+ input term)
  const double c = -0.918938533204672741780329736406;
  double obj = 0.0;
  grad->assign(log_noise.size(), 0.0);
  for (std::size_t d = 0; d < ds.outputs(); ++d) {
    const double sig = std::exp(log_noise[d]);
    const double inv2 = 1.0 / (sig * sig);
    const std::size_t s = data.f[d].rows();
    for (std::size_t i = 0; i < ds.y[d].size(); ++i) {
      for (std::size_t k = 0; k < s; ++k) {
        const double r = ds.y[d][i] - data.f[d](k, i);
        obj += (c - log_noise[d] - 0.5 * r * r * inv2) / double(s);
        (*grad)[d] += (r * r * inv2 - 1.0) / double(s);
      }
    }
  }
  if (io) {
    const std::size_t xi = log_noise.size() - 1;
    const double sig = std::exp(log_noise[xi]);
    const double inv2 = 1.0 / (sig * sig);
    const std::size_t s = data.u.rows();
    for (std::size_t j = 0; j < ds.x.size(); ++j) {
      for (std::size_t k = 0; k < s; ++k) {
        const double r = ds.x[j] - data.u(k, j);
        obj += (c - log_noise[xi] - 0.5 * r * r * inv2) / double(s);
        (*grad)[xi] += (r * r * inv2 - 1.0) / double(s);
      }
    }
  }
  return obj;
}

}  // namespace

TrainResult train(const VolterraModel& m, const TimeSeriesDataset& ds, const TrainingConfig& cfg) {
  if (int(ds.outputs()) != m.D) throw std::invalid_argument("train: dataset outputs != model D");
  if (m.io_mode != cfg.io_mode) throw std::invalid_argument("train: io_mode mismatch");
  if (m.io_mode && !ds.has_input()) throw std::invalid_argument("train: io_mode needs input data");

  TrainResult out;
  out.model = m;
  out.model.seed = cfg.seed;
  VecD x = flatten(m);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&]() { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  const std::size_t total = ds.total_obs();
  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, (total + std::size_t(std::max(1, cfg.batch_size)) - 1) /
                                   std::size_t(std::max(1, cfg.batch_size)));
  const long steps1 = long(cfg.epochs_phase1) * long(steps_per_epoch);
  const int io_batch_size = cfg.io_batch_size > 0 ? cfg.io_batch_size : cfg.batch_size;

  const Rng base(cfg.seed);
  AdamState state;
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  long step = 0;

  for (; step < steps1; ++step) {
    Rng batch_rng = base.fork(0xBA7C4ULL).fork(std::uint64_t(step));
    Rng draws_rng = base.fork(0xD4A35ULL).fork(std::uint64_t(step));
    const auto batch = draw_batch(ds, cfg.batch_size, batch_rng);
    std::vector<std::size_t> io_batch;
    if (m.io_mode) io_batch = draw_input_batch(ds, io_batch_size, batch_rng);
    const StepDraws draws = make_step_draws(m, cfg.s_train, draws_rng);

    GradResult g;
    try {
      g = grad_elbo_from_leaves(m, x, ds, batch, io_batch, draws, /*freeze_noise=*/true);
    } catch (const NumericInconsistency& e) {
      out.trace.aborted = true;
      out.trace.abort_reason = e.what();
      break;
    }
    bool finite = std::isfinite(g.value);
    for (double v : g.grad) finite = finite && std::isfinite(v);
    if (!finite) {
      out.trace.aborted = true;
      out.trace.abort_reason = "non-finite ELBO or gradient at step " + std::to_string(step);
      break;
    }
    VecD neg = g.grad;
    for (auto& v : neg) v = -v;
    adam_step(x, neg, state, hyper);
    out.trace.steps.push_back({step, 1, g.value, wall()});
  }
  unflatten(out.model, x);
  // noise was frozen throughout phase 1: restore it bit-exactly
  out.model.sigma_y = m.sigma_y;
  out.model.sigma_x = m.sigma_x;
  out.trace.noise_after_phase1 = out.model.sigma_y;
  if (m.io_mode) out.trace.noise_after_phase1.push_back(out.model.sigma_x);

  // phase 2: freeze everything else, fit the noise alone on fixed samples
  const long steps2 = long(cfg.epochs_phase2) * long(steps_per_epoch);
  if (steps2 > 0 && !out.trace.aborted) {
    Rng s_rng = base.fork(0xF17EULL);
    const NoiseFitData samples = presample_for_noise_fit(m, x, ds, cfg.s_train, s_rng);
    VecD log_noise;
    for (std::size_t d = 0; d < ds.outputs(); ++d) log_noise.push_back(std::log(out.model.sigma_y[d]));
    if (m.io_mode) log_noise.push_back(std::log(out.model.sigma_x));
    AdamState nstate;
    VecD grad;
    for (long k = 0; k < steps2; ++k, ++step) {
      const double obj = noise_objective_and_grad(samples, ds, log_noise, m.io_mode, &grad);
      if (!std::isfinite(obj)) {
        out.trace.aborted = true;
        out.trace.abort_reason = "non-finite noise objective at step " + std::to_string(step);
        break;
      }
      for (auto& v : grad) v = -v;
      adam_step(log_noise, grad, nstate, hyper);
      out.trace.steps.push_back({step, 2, obj, wall()});
    }
    for (std::size_t d = 0; d < ds.outputs(); ++d) out.model.sigma_y[d] = std::exp(log_noise[d]);
    if (m.io_mode) out.model.sigma_x = std::exp(log_noise.back());
  }
  out.trace.noise_after_phase2 = out.model.sigma_y;
  if (m.io_mode) out.trace.noise_after_phase2.push_back(out.model.sigma_x);
  return out;
}

PredictiveSummary predict(const VolterraModel& m, const std::vector<VecD>& times, int s,
                          Rng& rng) {
  if (int(times.size()) != m.D) throw std::invalid_argument("predict: times per output mismatch");
  const VecD leaves = flatten(m);
  const auto prep = prepare_model<double>(m, leaves);
  const StepDraws draws = make_step_draws(m, s, rng);

  PredictiveSummary out;
  out.samples.resize(std::size_t(m.D));
  for (int d = 0; d < m.D; ++d)
    out.samples[std::size_t(d)] = MatD(std::size_t(s), times[std::size_t(d)].size());

  parallel_for_tasks(std::size_t(s), [&](std::size_t k) {
    const auto paths = build_sample_paths(m, prep, draws.samples[k]);
    std::vector<OutputSampleEvaluator<double>> evals;
    for (int d = 0; d < m.D; ++d) evals.emplace_back(&paths.u, &paths.filters[std::size_t(d)]);
    for (int d = 0; d < m.D; ++d)
      for (std::size_t i = 0; i < times[std::size_t(d)].size(); ++i)
        out.samples[std::size_t(d)](k, i) = evals[std::size_t(d)](times[std::size_t(d)][i]);
  });

  out.mean.resize(std::size_t(m.D));
  out.sd_f.resize(std::size_t(m.D));
  out.sd_total.resize(std::size_t(m.D));
  for (int d = 0; d < m.D; ++d) {
    const auto& smp = out.samples[std::size_t(d)];
    const std::size_t n = smp.cols();
    auto& mean = out.mean[std::size_t(d)];
    auto& sdf = out.sd_f[std::size_t(d)];
    auto& sdt = out.sd_total[std::size_t(d)];
    mean.assign(n, 0.0);
    sdf.assign(n, 0.0);
    sdt.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < std::size_t(s); ++k) acc += smp(k, i);
      mean[i] = acc / double(s);
      double var = 0.0;
      for (std::size_t k = 0; k < std::size_t(s); ++k)
        var += (smp(k, i) - mean[i]) * (smp(k, i) - mean[i]);
      var /= double(s);
      sdf[i] = std::sqrt(var);
      const double sy = m.sigma_y[std::size_t(d)];
      sdt[i] = std::sqrt(var + sy * sy);
    }
  }
  return out;
}

MatD predict_input(const VolterraModel& m, const VecD& times, int s, Rng& rng) {
  const VecD leaves = flatten(m);
  const auto prep = prepare_model<double>(m, leaves);
  const StepDraws draws = make_step_draws(m, s, rng);
  MatD out(std::size_t(s), times.size());
  parallel_for_tasks(std::size_t(s), [&](std::size_t k) {
    const auto paths = build_sample_paths(m, prep, draws.samples[k]);
    for (std::size_t i = 0; i < times.size(); ++i) out(k, i) = eval_path1(paths.u, times[i]);
  });
  return out;
}

void write_trace(const TrainTrace& trace, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_trace: cannot open " + path);
  os.precision(17);
  os << "step\tphase\telbo\n";
  for (const auto& e : trace.steps) os << e.step << "\t" << e.phase << "\t" << e.elbo << "\n";
}

}  // namespace nvkm
