// nvkm command line: train / predict / evaluate / validate / sample-prior.
// Every command is a deterministic function of (config, seed, input files);
// outputs are byte-stable across reruns.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "nvkm/data.hpp"
#include "nvkm/errors.hpp"
#include "nvkm/inference.hpp"
#include "nvkm/model.hpp"
#include "nvkm/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nvkm;

namespace {

struct RunConfig {
  std::uint64_t seed = 0;
  bool io_mode = false;
  std::string output_dir = "nvkm_run";
  ModelConfig model;
  TrainingConfig training;

  std::string source;  // "synthetic" or "csv"; the one field with no default
  std::size_t synth_n = 1200;
  double synth_lo = -20.0, synth_hi = 20.0;
  std::string csv_path;
  CsvSchema schema;
  SplitSpec split;
  bool standardize = true;
};

SplitSpec::Mode parse_split_mode(const std::string& s) {
  if (s == "random_fraction") return SplitSpec::Mode::RandomFraction;
  if (s == "contiguous_block") return SplitSpec::Mode::ContiguousBlock;
  throw std::invalid_argument("config: unknown split mode '" + s + "'");
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  c.seed = j.value("seed", std::uint64_t(0));
  c.io_mode = j.value("io_mode", false);
  c.output_dir = j.value("output_dir", std::string("nvkm_run"));

  const json jm = j.value("model", json::object());
  c.model.C = jm.value("C", 1);
  c.model.D = jm.value("D", 1);
  if (jm.contains("vk_range")) {
    if (jm["vk_range"].is_array())
      c.model.vk_range = jm["vk_range"].get<std::vector<double>>();
    else
      c.model.vk_range = {jm["vk_range"].get<double>()};
  }
  c.model.eps_decay = jm.value("eps_decay", 0.01);
  c.model.n_basis = jm.value("n_basis", 50);
  c.model.axis_sizes = jm.value("axis_sizes", std::vector<int>{});
  c.model.m_u = jm.value("m_u", 0);
  c.model.input_points_fraction = jm.value("input_points_fraction", 0.1);
  c.model.input_lengthscale_factor = jm.value("input_lengthscale_factor", 1.0);
  c.model.vk_lengthscale_factor = jm.value("vk_lengthscale_factor", 1.0);
  c.model.vk_amplitude_init = jm.value("vk_amplitude_init", 1.0);
  c.model.input_amplitude_init = jm.value("input_amplitude_init", 1.0);
  c.model.mean_init_sd = jm.value("mean_init_sd", 0.05);
  c.model.chol_init_scale = jm.value("chol_init_scale", 0.1);
  c.model.sigma_y_init = jm.value("sigma_y_init", 0.05);
  c.model.sigma_x_init = jm.value("sigma_x_init", 0.05);
  c.model.jitter_rel = jm.value("jitter_rel", 1e-8);
  c.model.io_mode = c.io_mode;

  const json jt = j.value("training", json::object());
  c.training.s_train = jt.value("S", 10);
  c.training.s_eval = jt.value("S_eval", 50);
  c.training.batch_size = jt.value("batch_size", 80);
  c.training.io_batch_size = jt.value("io_batch_size", 0);
  c.training.lr = jt.value("lr", 5e-3);
  c.training.beta1 = jt.value("beta1", 0.9);
  c.training.beta2 = jt.value("beta2", 0.999);
  c.training.adam_eps = jt.value("adam_eps", 1e-8);
  c.training.epochs_phase1 = jt.value("epochs_phase1", 50);
  c.training.epochs_phase2 = jt.value("epochs_phase2", 20);
  c.training.seed = c.seed;
  c.training.io_mode = c.io_mode;

  if (!j.contains("data") || !j["data"].contains("source"))
    throw std::invalid_argument("config: data.source is required");
  const json jd = j["data"];
  c.source = jd["source"];
  if (c.source != "synthetic" && c.source != "csv")
    throw std::invalid_argument("config: data.source must be 'synthetic' or 'csv'");
  const json js = jd.value("synthetic", json::object());
  c.synth_n = js.value("n", std::size_t(1200));
  c.synth_lo = js.value("t_lo", -20.0);
  c.synth_hi = js.value("t_hi", 20.0);
  c.csv_path = jd.value("csv_path", std::string());
  const json jsch = jd.value("schema", json::object());
  c.schema.time_col = jsch.value("time", std::string("t"));
  c.schema.output_cols = jsch.value("outputs", std::vector<std::string>{"y"});
  c.schema.input_col = jsch.value("input", std::string());
  const std::string delim = jsch.value("delimiter", std::string(","));
  c.schema.delimiter = delim.empty() ? ',' : delim[0];
  const json jsp = jd.value("split", json::object());
  c.split.mode = parse_split_mode(jsp.value("mode", std::string("random_fraction")));
  c.split.fraction = jsp.value("fraction", 1.0 / 3.0);
  c.split.seed = jsp.value("seed", c.seed);
  if (jsp.contains("blocks")) {
    for (const auto& b : jsp["blocks"]) {
      SplitSpec::Block blk;
      blk.output = b.value("output", 0);
      blk.start = b.value("start", -1L);
      blk.length = b.value("length", 0L);
      c.split.blocks.push_back(blk);
    }
  }
  c.standardize = jd.value("standardize", true);
  return c;
}

json resolved_config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["io_mode"] = c.io_mode;
  j["output_dir"] = c.output_dir;
  j["model"] = {{"C", c.model.C},
                {"D", c.model.D},
                {"vk_range", c.model.vk_range},
                {"eps_decay", c.model.eps_decay},
                {"n_basis", c.model.n_basis},
                {"axis_sizes", c.model.axis_sizes},
                {"m_u", c.model.m_u},
                {"input_points_fraction", c.model.input_points_fraction},
                {"input_lengthscale_factor", c.model.input_lengthscale_factor},
                {"vk_lengthscale_factor", c.model.vk_lengthscale_factor},
                {"vk_amplitude_init", c.model.vk_amplitude_init},
                {"input_amplitude_init", c.model.input_amplitude_init},
                {"mean_init_sd", c.model.mean_init_sd},
                {"chol_init_scale", c.model.chol_init_scale},
                {"sigma_y_init", c.model.sigma_y_init},
                {"sigma_x_init", c.model.sigma_x_init},
                {"jitter_rel", c.model.jitter_rel}};
  j["training"] = {{"S", c.training.s_train},
                   {"S_eval", c.training.s_eval},
                   {"batch_size", c.training.batch_size},
                   {"io_batch_size", c.training.io_batch_size},
                   {"lr", c.training.lr},
                   {"beta1", c.training.beta1},
                   {"beta2", c.training.beta2},
                   {"adam_eps", c.training.adam_eps},
                   {"epochs_phase1", c.training.epochs_phase1},
                   {"epochs_phase2", c.training.epochs_phase2}};
  json blocks = json::array();
  for (const auto& b : c.split.blocks)
    blocks.push_back({{"output", b.output}, {"start", b.start}, {"length", b.length}});
  j["data"] = {
      {"source", c.source},
      {"synthetic", {{"n", c.synth_n}, {"t_lo", c.synth_lo}, {"t_hi", c.synth_hi}}},
      {"csv_path", c.csv_path},
      {"schema",
       {{"time", c.schema.time_col},
        {"outputs", c.schema.output_cols},
        {"input", c.schema.input_col},
        {"delimiter", std::string(1, c.schema.delimiter)}}},
      {"split",
       {{"mode", c.split.mode == SplitSpec::Mode::RandomFraction ? "random_fraction"
                                                                 : "contiguous_block"},
        {"fraction", c.split.fraction},
        {"seed", c.split.seed},
        {"blocks", blocks}}},
      {"standardize", c.standardize}};
  return j;
}

struct PreparedData {
  TimeSeriesDataset train_raw, test_raw;  // original units
  TimeSeriesDataset train_model;          // standardized view used by the model
  StandardizeParams params;               // identity when standardization is off
};

PreparedData prepare_data(const RunConfig& c) {
  TimeSeriesDataset full;
  if (c.source == "synthetic") {
    full = gen_synthetic(c.synth_n, c.synth_lo, c.synth_hi, c.seed);
  } else {
    if (c.csv_path.empty()) throw std::invalid_argument("config: csv_path required");
    full = load_csv(c.csv_path, c.schema);
  }
  PreparedData out;
  auto [train, test] = split(full, c.split);
  out.train_raw = std::move(train);
  out.test_raw = std::move(test);
  if (c.standardize) {
    out.params = compute_standardize(out.train_raw);
  } else {
    out.params.shift.assign(out.train_raw.outputs(), 0.0);
    out.params.scale.assign(out.train_raw.outputs(), 1.0);
  }
  out.train_model = apply_standardize(out.train_raw, out.params);
  return out;
}

DataSummary data_summary(const TimeSeriesDataset& ds) {
  DataSummary s;
  double lo = 1e300, hi = -1e300, n = 0;
  for (const auto& tv : ds.t) {
    for (double t : tv) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    n += double(tv.size());
  }
  for (double t : ds.tx) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  s.t_min = lo;
  s.t_max = hi;
  s.n_avg = n / double(ds.outputs());
  return s;
}

VolterraModel build_model(const RunConfig& cfg, const PreparedData& data) {
  auto model = init_model(cfg.model, data_summary(data.train_model), cfg.seed);
  model.standardize_shift = data.params.shift;
  model.standardize_scale = data.params.scale;
  model.input_shift = data.params.in_shift;
  model.input_scale = data.params.in_scale;
  model.config_echo = resolved_config_json(cfg).dump();
  return model;
}

VecD linspace(double lo, double hi, std::size_t n) {
  VecD v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
  return v;
}

// "lo:hi:n"
VecD parse_times(const std::string& spec) {
  const auto a = spec.find(':'), b = spec.rfind(':');
  if (a == std::string::npos || b == a)
    throw std::invalid_argument("times spec must be lo:hi:n");
  const double lo = std::stod(spec.substr(0, a));
  const double hi = std::stod(spec.substr(a + 1, b - a - 1));
  const long n = std::stol(spec.substr(b + 1));
  if (n < 1) throw std::invalid_argument("times spec: n must be >= 1");
  return linspace(lo, hi, std::size_t(n));
}

// Combined NLPD of the training set under the trained model, in model units;
// the range-search selection criterion (outputs plus the input series in the
// IO variant).
double training_nlpd(const VolterraModel& m, const TimeSeriesDataset& train_model, int s,
                     std::uint64_t seed) {
  std::vector<VecD> times;
  for (const auto& tv : train_model.t) times.push_back(tv);
  Rng rng(seed);
  const auto p = predict(m, times, s, rng);
  double acc = 0.0;
  for (int d = 0; d < m.D; ++d)
    acc += nlpd_mixture(p.samples[std::size_t(d)], m.sigma_y[std::size_t(d)],
                        train_model.y[std::size_t(d)]);
  if (m.io_mode && train_model.has_input()) {
    Rng urng(seed + 1);
    const MatD us = predict_input(m, train_model.tx, s, urng);
    acc += nlpd_mixture(us, m.sigma_x, train_model.x);
  }
  return acc;
}

int cmd_train(const std::string& config_path, const std::string& outdir_override,
              int range_search) {
  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("train: cannot open config " + config_path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("train: config parse failure: " + std::string(e.what()));
  }
  RunConfig cfg = parse_run_config(j);
  if (!outdir_override.empty()) cfg.output_dir = outdir_override;
  const auto data = prepare_data(cfg);

  fs::create_directories(cfg.output_dir);
  {
    std::ofstream os(fs::path(cfg.output_dir) / "config.json");
    os << resolved_config_json(cfg).dump(2) << "\n";
  }
  {
    CsvSchema schema = cfg.schema;
    if (cfg.source == "synthetic") schema.output_cols = {"y"};
    save_csv(data.train_raw, schema, (fs::path(cfg.output_dir) / "train.csv").string());
    save_csv(data.test_raw, schema, (fs::path(cfg.output_dir) / "test.csv").string());
  }

  // candidate VK ranges: the configured setting, plus log-uniform draws
  // around it when a range search is requested; selection by training NLPD
  std::vector<std::vector<double>> candidates = {cfg.model.vk_range};
  Rng range_rng(cfg.seed ^ 0x52414e47ULL);
  for (int k = 1; k < range_search; ++k) {
    std::vector<double> ranges;
    for (double r : cfg.model.vk_range)
      ranges.push_back(r * std::exp(range_rng.uniform(-0.6931, 0.6931)));
    candidates.push_back(std::move(ranges));
  }

  bool have_best = false;
  double best_nlpd = 0.0;
  TrainResult best;
  std::vector<double> best_ranges;
  std::ostringstream search_log;
  search_log.precision(17);
  search_log << "candidate\tranges\ttrain_nlpd\taborted\n";
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    RunConfig trial = cfg;
    trial.model.vk_range = candidates[k];
    auto model = build_model(trial, data);
    const auto result = train(model, data.train_model, trial.training);
    std::string rtext;
    for (double r : candidates[k]) rtext += (rtext.empty() ? "" : " ") + std::to_string(r);
    if (result.trace.aborted) {
      search_log << k << "\t" << rtext << "\tnan\t1\n";
      if (candidates.size() == 1) {
        checkpoint_save(result.model, (fs::path(cfg.output_dir) / "checkpoint.bin").string());
        write_trace(result.trace, (fs::path(cfg.output_dir) / "trace.tsv").string());
        std::cerr << "train aborted: " << result.trace.abort_reason
                  << " (last good checkpoint written)\n";
        return 3;
      }
      continue;
    }
    const double nlpd = training_nlpd(result.model, data.train_model, cfg.training.s_eval,
                                      cfg.seed + 17);
    search_log << k << "\t" << rtext << "\t" << nlpd << "\t0\n";
    if (!have_best || nlpd < best_nlpd) {
      have_best = true;
      best_nlpd = nlpd;
      best = result;
      best_ranges = candidates[k];
    }
  }
  if (!have_best) {
    std::cerr << "train: every candidate aborted\n";
    return 3;
  }
  checkpoint_save(best.model, (fs::path(cfg.output_dir) / "checkpoint.bin").string());
  write_trace(best.trace, (fs::path(cfg.output_dir) / "trace.tsv").string());
  if (candidates.size() > 1) {
    std::ofstream os(fs::path(cfg.output_dir) / "range_search.tsv");
    os << search_log.str();
    std::cout << "range search kept vk_range =";
    for (double r : best_ranges) std::cout << " " << r;
    std::cout << " (training NLPD " << best_nlpd << ")\n";
  }
  std::cout << "trained " << best.trace.steps.size() << " steps; artifacts in "
            << cfg.output_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& times_spec, int s,
                std::uint64_t seed, const std::string& out_path) {
  const auto model = checkpoint_load(ckpt);
  const VecD times = parse_times(times_spec);
  Rng rng(seed);
  const auto p = predict(model, std::vector<VecD>(std::size_t(model.D), times), s, rng);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("predict: cannot open " + out_path);
  os.precision(17);
  os << "output,t,mean,sd,lower2sigma,upper2sigma\n";
  for (int d = 0; d < model.D; ++d) {
    const double shift = model.standardize_shift[std::size_t(d)];
    const double scale = model.standardize_scale[std::size_t(d)];
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double mean = shift + scale * p.mean[std::size_t(d)][i];
      const double sd = scale * p.sd_total[std::size_t(d)][i];
      os << d << "," << times[i] << "," << mean << "," << sd << "," << mean - 2.0 * sd << ","
         << mean + 2.0 * sd << "\n";
    }
  }
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& config_path, int s,
                 std::uint64_t seed, const std::string& out_path, bool on_train) {
  const auto model = checkpoint_load(ckpt);
  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("evaluate: cannot open config " + config_path);
  RunConfig cfg = parse_run_config(json::parse(is));
  const auto data = prepare_data(cfg);
  const TimeSeriesDataset& eval_set = on_train ? data.train_raw : data.test_raw;
  if (int(eval_set.outputs()) != model.D)
    throw std::invalid_argument("evaluate: dataset outputs != model D");

  std::vector<VecD> times;
  for (const auto& tv : eval_set.t) times.push_back(tv);
  Rng rng(seed);
  const auto p = predict(model, times, s, rng);

  std::ostringstream report;
  report.precision(17);
  report << "# nvkm evaluate S=" << s << " seed=" << seed << " checkpoint=" << ckpt
         << " set=" << (on_train ? "train" : "test") << "\n";
  report << "output\tn\tnmse\trmse\tnlpd\n";
  double agg_nmse = 0.0, agg_rmse = 0.0, agg_nlpd = 0.0;
  int counted = 0;
  for (int d = 0; d < model.D; ++d) {
    const auto& y = eval_set.y[std::size_t(d)];
    if (y.empty()) {
      report << d << "\t0\tnan\tnan\tnan\n";
      continue;
    }
    const double shift = model.standardize_shift[std::size_t(d)];
    const double scale = model.standardize_scale[std::size_t(d)];
    const VecD mean = destandardize(p.mean[std::size_t(d)], shift, scale);
    MatD samples = p.samples[std::size_t(d)];
    for (auto& v : samples.data()) v = shift + scale * v;
    const double m_nmse = nmse(mean, y);
    const double m_rmse = rmse(mean, y);
    const double m_nlpd = nlpd_mixture(samples, scale * model.sigma_y[std::size_t(d)], y);
    report << d << "\t" << y.size() << "\t" << m_nmse << "\t" << m_rmse << "\t" << m_nlpd
           << "\n";
    agg_nmse += m_nmse;
    agg_rmse += m_rmse;
    agg_nlpd += m_nlpd;
    ++counted;
  }
  if (counted > 0)
    report << "aggregate\t-\t" << agg_nmse / counted << "\t" << agg_rmse / counted << "\t"
           << agg_nlpd / counted << "\n";
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("evaluate: cannot open " + out_path);
  os << report.str();
  std::cout << report.str();
  return 0;
}

int cmd_validate(const std::string& level) {
  const auto lvl = level == "full" ? validation::Level::Full : validation::Level::Quick;
  const auto results = validation::run_validation(lvl);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << " ("
              << r.seconds << "s)\n";
    all = all && r.pass;
  }
  return all ? 0 : 3;
}

int cmd_sample_prior(const std::string& config_path, int draws, const std::string& outdir) {
  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("sample-prior: cannot open config " + config_path);
  RunConfig cfg = parse_run_config(json::parse(is));
  const auto data = prepare_data(cfg);
  const auto model = build_model(cfg, data);
  fs::create_directories(outdir);
  Rng rng(cfg.seed ^ 0x5a3935ULL);

  const auto summary = data_summary(data.train_model);
  const VecD tgrid = linspace(summary.t_min, summary.t_max, 200);

  // prior draws of the input process
  const auto gu = gram_cholesky_se(model.input.z, {model.input.sigma_u, model.input.p_u},
                                   model.jitter_rel * model.input.sigma_u * model.input.sigma_u);
  std::vector<ExplicitPath<double>> upaths;
  for (int k = 0; k < draws; ++k) {
    VecD eps(model.input.m());
    for (auto& e : eps) e = rng.normal();
    const VecD v = inducing_from_eps(VecD(model.input.m(), 0.0), gu.l, eps);
    upaths.push_back(make_conditioned_path<double>(
        {model.input.sigma_u, model.input.p_u}, 0.0, model.input.z, v,
        draw_basis_draws(1, std::size_t(model.n_basis), rng), gu.l));
  }
  {
    std::ofstream os(fs::path(outdir) / "u_draws.csv");
    os.precision(17);
    os << "t";
    for (int k = 0; k < draws; ++k) os << ",draw" << k;
    os << "\n";
    for (double t : tgrid) {
      os << t;
      for (int k = 0; k < draws; ++k) os << "," << eval_path1(upaths[std::size_t(k)], t);
      os << "\n";
    }
  }

  // per-(d, c) prior draws of the VK diagonal slice G(s, ..., s) and the
  // output draws assembled from them
  std::vector<std::vector<std::vector<ExplicitPath<double>>>> gpaths;
  gpaths.resize(std::size_t(draws));
  for (int k = 0; k < draws; ++k) gpaths[std::size_t(k)].resize(std::size_t(model.D));
  for (int d = 0; d < model.D; ++d) {
    for (int cc = 1; cc <= model.C; ++cc) {
      const auto& vk = model.vk(d, cc);
      const auto gg = gram_cholesky_se(vk.z, {vk.sigma_g, vk.p_g()},
                                       model.jitter_rel * vk.sigma_g * vk.sigma_g);
      std::ofstream os(fs::path(outdir) /
                       ("vk_diag_d" + std::to_string(d) + "_c" + std::to_string(cc) + ".csv"));
      os.precision(17);
      os << "s";
      for (int k = 0; k < draws; ++k) os << ",draw" << k;
      os << "\n";
      const VecD sgrid = linspace(-vk.range, vk.range, 101);
      std::vector<ExplicitPath<double>> paths;
      for (int k = 0; k < draws; ++k) {
        VecD eps(vk.m());
        for (auto& e : eps) e = rng.normal();
        const VecD v = inducing_from_eps(VecD(vk.m(), 0.0), gg.l, eps);
        paths.push_back(make_conditioned_path<double>(
            {vk.sigma_g, vk.p_g()}, vk.alpha, vk.z, v,
            draw_basis_draws(std::size_t(cc), std::size_t(model.n_basis), rng), gg.l));
      }
      for (double sv : sgrid) {
        os << sv;
        VecD pt(std::size_t(cc), sv);
        for (int k = 0; k < draws; ++k) os << "," << eval_path(paths[std::size_t(k)], pt);
        os << "\n";
      }
      for (int k = 0; k < draws; ++k)
        gpaths[std::size_t(k)][std::size_t(d)].push_back(std::move(paths[std::size_t(k)]));
    }
  }
  {
    std::ofstream os(fs::path(outdir) / "output_draws.csv");
    os.precision(17);
    os << "output,t";
    for (int k = 0; k < draws; ++k) os << ",draw" << k;
    os << "\n";
    for (int d = 0; d < model.D; ++d) {
      for (double t : tgrid) {
        os << d << "," << t;
        for (int k = 0; k < draws; ++k)
          os << ","
             << eval_output_sample(upaths[std::size_t(k)],
                                   gpaths[std::size_t(k)][std::size_t(d)], t);
        os << "\n";
      }
    }
  }
  std::cout << "prior draws written to " << outdir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonparametric Volterra kernels model"};
  app.require_subcommand(1);

  std::string config_path, outdir_override;
  int range_search = 1;
  auto* train_cmd = app.add_subcommand("train", "fit a model from a config file");
  train_cmd->add_option("--config", config_path, "run config (JSON)")->required();
  train_cmd->add_option("--output-dir", outdir_override, "override the config output_dir");
  train_cmd->add_option("--range-search", range_search,
                        "try this many VK range settings, keep the lowest training NLPD");

  std::string ckpt, times_spec = "-1:1:101", pred_out = "predictions.csv";
  int s_pred = 50;
  std::uint64_t seed = 0;
  auto* predict_cmd = app.add_subcommand("predict", "posterior predictive curves");
  predict_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  predict_cmd->add_option("--times", times_spec, "time grid lo:hi:n");
  predict_cmd->add_option("--s", s_pred, "posterior samples");
  predict_cmd->add_option("--seed", seed, "sampling seed");
  predict_cmd->add_option("--out", pred_out, "output CSV");

  std::string eval_config, eval_out = "metrics.tsv";
  bool on_train = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "NMSE/RMSE/NLPD report");
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--config", eval_config, "run config for data + split")->required();
  eval_cmd->add_option("--s", s_pred, "posterior samples");
  eval_cmd->add_option("--seed", seed, "sampling seed");
  eval_cmd->add_option("--out", eval_out, "metrics file");
  eval_cmd->add_flag("--on-train", on_train, "evaluate on the training portion");

  std::string level = "quick";
  auto* validate_cmd = app.add_subcommand("validate", "oracle validation suites");
  validate_cmd->add_option("--level", level, "quick or full")
      ->check(CLI::IsMember({"quick", "full"}));

  std::string prior_out = "prior_draws";
  int n_draws = 10;
  auto* prior_cmd = app.add_subcommand("sample-prior", "prior function draws and VK diagonals");
  prior_cmd->add_option("--config", config_path, "run config (JSON)")->required();
  prior_cmd->add_option("--draws", n_draws, "number of draws");
  prior_cmd->add_option("--out", prior_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, outdir_override, range_search);
    if (*predict_cmd) return cmd_predict(ckpt, times_spec, s_pred, seed, pred_out);
    if (*eval_cmd) return cmd_evaluate(ckpt, eval_config, s_pred, seed, eval_out, on_train);
    if (*validate_cmd) return cmd_validate(level);
    if (*prior_cmd) return cmd_sample_prior(config_path, n_draws, prior_out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptySeries& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UndefinedMetric& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IncompatibleCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IllConditionedGram& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericInconsistency& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const UnsupportedOrder& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
