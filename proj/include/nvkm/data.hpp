#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nvkm/linalg.hpp"
#include "nvkm/rng.hpp"

namespace nvkm {

// Per-output observation arrays, plus an optional observed input series.
struct TimeSeriesDataset {
  std::vector<VecD> t;  // times per output
  std::vector<VecD> y;  // values per output
  VecD tx, x;           // observed input series (may be empty)

  std::size_t outputs() const { return y.size(); }
  bool has_input() const { return !x.empty(); }
  std::size_t total_obs() const {
    std::size_t n = 0;
    for (const auto& v : y) n += v.size();
    return n;
  }
  std::size_t max_obs() const {
    std::size_t n = 0;
    for (const auto& v : y) n = std::max(n, v.size());
    return n;
  }
};

struct CsvSchema {
  std::string time_col = "t";
  std::vector<std::string> output_cols;
  std::string input_col;  // empty when no input series
  char delimiter = ',';
};

struct SplitSpec {
  enum class Mode { RandomFraction, ContiguousBlock };
  struct Block {
    int output = 0;
    long start = -1;  // negative centers the block
    long length = 0;
  };
  Mode mode = Mode::RandomFraction;
  double fraction = 1.0 / 3.0;  // fraction of each output kept for training
  std::vector<Block> blocks;    // removed (test) regions, contiguous mode
  std::uint64_t seed = 0;
};

struct StandardizeParams {
  VecD shift, scale;                    // per output
  double in_shift = 0.0, in_scale = 1.0;
};

// Synthetic single-output benchmark: a GP input driven through fixed
// convolution filters and a hard clip, observed with Gaussian noise.
struct SyntheticOptions {
  std::size_t conv_points = 4096;   // trapezoid points over tau in [-6, 6]
  double tau_half_width = 6.0;
  std::size_t prior_basis = 128;    // Fourier features for the input draw
  double noise_sd = 0.05;
};

struct SyntheticResult {
  TimeSeriesDataset ds;
  VecD clean;  // pre-noise targets (clip already applied)
};

SyntheticResult gen_synthetic_full(std::size_t n, double t_lo, double t_hi, std::uint64_t seed,
                                   const SyntheticOptions& opt = {});
TimeSeriesDataset gen_synthetic(std::size_t n, double t_lo, double t_hi, std::uint64_t seed);

TimeSeriesDataset load_csv(const std::string& path, const CsvSchema& schema);
void save_csv(const TimeSeriesDataset& ds, const CsvSchema& schema, const std::string& path);

std::pair<TimeSeriesDataset, TimeSeriesDataset> split(const TimeSeriesDataset& ds,
                                                      const SplitSpec& spec);

double nmse(const VecD& predicted, const VecD& truth);
double rmse(const VecD& predicted, const VecD& truth);

// Mixture negative log predictive density, averaged per point: samples is
// S x n (rows are posterior draws), sigma the observation noise.
double nlpd_mixture(const MatD& samples, double sigma, const VecD& truth);

StandardizeParams compute_standardize(const TimeSeriesDataset& ds);
TimeSeriesDataset apply_standardize(const TimeSeriesDataset& ds, const StandardizeParams& p);
VecD destandardize(const VecD& values, double shift, double scale);

}  // namespace nvkm
