#include "nvkm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nvkm/errors.hpp"
#include "nvkm/parallel.hpp"
#include "nvkm/pathwise.hpp"

namespace nvkm {

SyntheticResult gen_synthetic_full(std::size_t n, double t_lo, double t_hi, std::uint64_t seed,
                                   const SyntheticOptions& opt) {
  if (n < 2) throw std::invalid_argument("gen_synthetic: need n >= 2");

  // input draw: SE GP with length scale 2, via a prior Fourier basis
  Rng rng(splitmix64(seed ^ 0x73796eULL));
  const SeKernel kg{1.0, se_length_scale_to_p(2.0)};
  const auto g = draw_basis(kg, 1, opt.prior_basis, rng);

  const std::size_t nq = opt.conv_points;
  VecD tau(nq), w1(nq), w2(nq), w3(nq), wt(nq);
  const double h = 2.0 * opt.tau_half_width / double(nq - 1);
  for (std::size_t k = 0; k < nq; ++k) {
    tau[k] = -opt.tau_half_width + h * double(k);
    const double env = std::exp(-2.0 * tau[k] * tau[k]);
    w1[k] = env * std::sin(6.0 * tau[k]);
    w2[k] = env * std::pow(std::sin(5.0 * tau[k]), 2);
    w3[k] = env * std::cos(4.0 * tau[k]);
    wt[k] = (k == 0 || k == nq - 1) ? 0.5 : 1.0;
  }

  SyntheticResult out;
  out.ds.t.assign(1, VecD(n));
  out.ds.y.assign(1, VecD(n));
  out.clean.resize(n);
  VecD& t = out.ds.t[0];
  for (std::size_t i = 0; i < n; ++i)
    t[i] = t_lo + (t_hi - t_lo) * double(i) / double(n - 1);

  parallel_for_tasks(n, [&](std::size_t i) {
    double f1 = 0.0, f2 = 0.0, f3 = 0.0;
    for (std::size_t k = 0; k < nq; ++k) {
      const double ti = t[i] - tau[k];
      const double gv = eval_basis(g, &ti);
      f1 += wt[k] * w1[k] * gv;
      f2 += wt[k] * w2[k] * gv;
      f3 += wt[k] * w3[k] * gv;
    }
    f1 *= h, f2 *= h, f3 *= h;
    out.clean[i] = std::min(5.0 * f1 * f2 + 5.0 * f3 * f3 * f3, 1.0);
  });

  Rng noise(splitmix64(seed ^ 0x6e6f697365ULL));
  for (std::size_t i = 0; i < n; ++i) out.ds.y[0][i] = out.clean[i] + opt.noise_sd * noise.normal();
  return out;
}

TimeSeriesDataset gen_synthetic(std::size_t n, double t_lo, double t_hi, std::uint64_t seed) {
  return gen_synthetic_full(n, t_lo, t_hi, seed).ds;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

TimeSeriesDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("load_csv: empty file " + path);
  const auto header = split_line(line, schema.delimiter);
  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return long(i);
    return -1L;
  };
  const long tcol = find_col(schema.time_col);
  if (tcol < 0) throw ParseError("load_csv: missing time column '" + schema.time_col + "'");
  std::vector<long> ycols;
  for (const auto& name : schema.output_cols) {
    const long c = find_col(name);
    if (c < 0) throw ParseError("load_csv: missing output column '" + name + "'");
    ycols.push_back(c);
  }
  const long xcol = schema.input_col.empty() ? -1 : find_col(schema.input_col);
  if (!schema.input_col.empty() && xcol < 0)
    throw ParseError("load_csv: missing input column '" + schema.input_col + "'");

  struct Row {
    double t;
    std::vector<std::pair<bool, double>> y;
    bool has_x = false;
    double x = 0.0;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_line(line, schema.delimiter);
    auto cell_value = [&](long col, bool* present) -> double {
      if (col >= long(cells.size()) || cells[std::size_t(col)].empty()) {
        *present = false;
        return 0.0;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[std::size_t(col)], &used);
        if (used != cells[std::size_t(col)].size())
          throw std::invalid_argument("trailing characters");
        *present = true;
        return v;
      } catch (const std::exception&) {
        throw ParseError("load_csv: unparseable value '" + cells[std::size_t(col)] + "' at " +
                         path + ":" + std::to_string(lineno));
      }
    };
    Row r;
    bool t_present = false;
    r.t = cell_value(tcol, &t_present);
    if (!t_present)
      throw ParseError("load_csv: missing time value at " + path + ":" + std::to_string(lineno));
    for (long c : ycols) {
      bool present = false;
      const double v = cell_value(c, &present);
      r.y.emplace_back(present, v);
    }
    if (xcol >= 0) r.x = cell_value(xcol, &r.has_x);
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });

  TimeSeriesDataset ds;
  ds.t.assign(schema.output_cols.size(), {});
  ds.y.assign(schema.output_cols.size(), {});
  for (const auto& r : rows) {
    for (std::size_t d = 0; d < r.y.size(); ++d) {
      if (r.y[d].first) {
        ds.t[d].push_back(r.t);
        ds.y[d].push_back(r.y[d].second);
      }
    }
    if (r.has_x) {
      ds.tx.push_back(r.t);
      ds.x.push_back(r.x);
    }
  }
  for (std::size_t d = 0; d < ds.y.size(); ++d)
    if (ds.y[d].empty())
      throw EmptySeries("load_csv: output '" + schema.output_cols[d] + "' has no values");
  return ds;
}

void save_csv(const TimeSeriesDataset& ds, const CsvSchema& schema, const std::string& path) {
  if (schema.output_cols.size() != ds.outputs())
    throw std::invalid_argument("save_csv: schema outputs mismatch");
  // union of all time stamps, one row per distinct time
  VecD times;
  for (const auto& tv : ds.t) times.insert(times.end(), tv.begin(), tv.end());
  times.insert(times.end(), ds.tx.begin(), ds.tx.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("save_csv: cannot open " + path);
  os.precision(17);
  os << schema.time_col;
  for (const auto& n : schema.output_cols) os << schema.delimiter << n;
  if (!schema.input_col.empty()) os << schema.delimiter << schema.input_col;
  os << "\n";
  std::vector<std::size_t> cursor(ds.outputs(), 0);
  std::size_t xcur = 0;
  for (double t : times) {
    os << t;
    for (std::size_t d = 0; d < ds.outputs(); ++d) {
      os << schema.delimiter;
      if (cursor[d] < ds.t[d].size() && ds.t[d][cursor[d]] == t) {
        os << ds.y[d][cursor[d]];
        ++cursor[d];
      }
    }
    if (!schema.input_col.empty()) {
      os << schema.delimiter;
      if (xcur < ds.tx.size() && ds.tx[xcur] == t) {
        os << ds.x[xcur];
        ++xcur;
      }
    }
    os << "\n";
  }
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> split(const TimeSeriesDataset& ds,
                                                      const SplitSpec& spec) {
  TimeSeriesDataset train, test;
  train.tx = ds.tx;
  train.x = ds.x;
  const std::size_t nd = ds.outputs();
  train.t.assign(nd, {});
  train.y.assign(nd, {});
  test.t.assign(nd, {});
  test.y.assign(nd, {});

  if (spec.mode == SplitSpec::Mode::RandomFraction) {
    Rng rng(splitmix64(spec.seed ^ 0x73706c6974ULL));
    for (std::size_t d = 0; d < nd; ++d) {
      const std::size_t n = ds.y[d].size();
      const std::size_t ntrain = std::size_t(std::llround(spec.fraction * double(n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < std::min(ntrain, n ? n - 1 : 0); ++i) {
        const std::size_t j = i + std::size_t(rng.below(n - i));
        std::swap(idx[i], idx[j]);
      }
      std::vector<bool> in_train(n, false);
      for (std::size_t i = 0; i < std::min(ntrain, n); ++i) in_train[idx[i]] = true;
      for (std::size_t i = 0; i < n; ++i) {
        auto& dst = in_train[i] ? train : test;
        dst.t[d].push_back(ds.t[d][i]);
        dst.y[d].push_back(ds.y[d][i]);
      }
    }
  } else {
    std::vector<std::pair<long, long>> removed(nd, {0, 0});  // [start, end)
    for (const auto& b : spec.blocks) {
      if (b.output < 0 || std::size_t(b.output) >= nd)
        throw std::invalid_argument("split: block output index out of range");
      const long n = long(ds.y[std::size_t(b.output)].size());
      long start = b.start >= 0 ? b.start : (n - b.length) / 2;
      if (b.length < 0 || start < 0 || start + b.length > n)
        throw std::invalid_argument("split: block out of range");
      removed[std::size_t(b.output)] = {start, start + b.length};
    }
    for (std::size_t d = 0; d < nd; ++d) {
      for (std::size_t i = 0; i < ds.y[d].size(); ++i) {
        const bool is_test = long(i) >= removed[d].first && long(i) < removed[d].second;
        auto& dst = is_test ? test : train;
        dst.t[d].push_back(ds.t[d][i]);
        dst.y[d].push_back(ds.y[d][i]);
      }
    }
  }
  return {std::move(train), std::move(test)};
}

double rmse(const VecD& predicted, const VecD& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("rmse: size mismatch or empty");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = predicted[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / double(truth.size()));
}

double nmse(const VecD& predicted, const VecD& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("nmse: size mismatch or empty");
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= double(truth.size());
  double var = 0.0, se = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    var += (truth[i] - mean) * (truth[i] - mean);
    se += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  }
  if (var <= 0.0) throw UndefinedMetric("nmse: zero test variance");
  return se / var;
}

double nlpd_mixture(const MatD& samples, double sigma, const VecD& truth) {
  const std::size_t s = samples.rows(), n = samples.cols();
  if (n != truth.size() || s == 0) throw std::invalid_argument("nlpd: shape mismatch");
  if (!(sigma > 0.0)) throw UndefinedMetric("nlpd: nonpositive noise");
  const double log_norm = -0.5 * std::log(2.0 * 3.141592653589793238463) - std::log(sigma);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // log(1/S sum exp(log N)) via log-sum-exp
    double mx = -1e300;
    VecD terms(s);
    for (std::size_t k = 0; k < s; ++k) {
      const double r = (truth[i] - samples(k, i)) / sigma;
      terms[k] = log_norm - 0.5 * r * r;
      mx = std::max(mx, terms[k]);
    }
    double sum = 0.0;
    for (double v : terms) sum += std::exp(v - mx);
    const double logp = mx + std::log(sum / double(s));
    if (!std::isfinite(logp)) throw UndefinedMetric("nlpd: non-finite density");
    acc -= logp;
  }
  return acc / double(n);
}

StandardizeParams compute_standardize(const TimeSeriesDataset& ds) {
  StandardizeParams p;
  for (const auto& yv : ds.y) {
    if (yv.empty()) throw EmptySeries("standardize: empty series");
    double mean = 0.0;
    for (double v : yv) mean += v;
    mean /= double(yv.size());
    double var = 0.0;
    for (double v : yv) var += (v - mean) * (v - mean);
    var /= double(yv.size());
    if (var <= 0.0) throw std::invalid_argument("standardize: zero variance series");
    p.shift.push_back(mean);
    p.scale.push_back(std::sqrt(var));
  }
  if (!ds.x.empty()) {
    double mean = 0.0;
    for (double v : ds.x) mean += v;
    mean /= double(ds.x.size());
    double var = 0.0;
    for (double v : ds.x) var += (v - mean) * (v - mean);
    var /= double(ds.x.size());
    if (var <= 0.0) throw std::invalid_argument("standardize: zero variance input");
    p.in_shift = mean;
    p.in_scale = std::sqrt(var);
  }
  return p;
}

TimeSeriesDataset apply_standardize(const TimeSeriesDataset& ds, const StandardizeParams& p) {
  TimeSeriesDataset out = ds;
  for (std::size_t d = 0; d < ds.outputs(); ++d)
    for (auto& v : out.y[d]) v = (v - p.shift[d]) / p.scale[d];
  for (auto& v : out.x) v = (v - p.in_shift) / p.in_scale;
  return out;
}

VecD destandardize(const VecD& values, double shift, double scale) {
  VecD out = values;
  for (auto& v : out) v = shift + scale * v;
  return out;
}

}  // namespace nvkm
