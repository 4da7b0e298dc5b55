#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "nvkm/data.hpp"
#include "nvkm/errors.hpp"

using namespace nvkm;

TEST_CASE("gen_synthetic respects the clip and the protocol sizes") {
  const auto full = gen_synthetic_full(300, -20.0, 20.0, 42);
  CHECK(full.ds.y[0].size() == 300);
  CHECK(full.ds.t[0].front() == doctest::Approx(-20.0));
  CHECK(full.ds.t[0].back() == doctest::Approx(20.0));
  double clipped = 0;
  for (double v : full.clean) {
    CHECK(v <= 1.0);  // clip applied before noise, exactly
    clipped += (v == 1.0);
  }
  for (double v : full.ds.y[0]) CHECK(v <= 1.0 + 6.0 * 0.05);

  const auto a = gen_synthetic(100, -20.0, 20.0, 7);
  const auto b = gen_synthetic(100, -20.0, 20.0, 7);
  CHECK(a.y[0] == b.y[0]);
}

TEST_CASE("gen_synthetic convolution grid is converged") {
  SyntheticOptions coarse, fine;
  coarse.conv_points = 4096;
  fine.conv_points = 8192;
  const auto c = gen_synthetic_full(40, -10.0, 10.0, 3, coarse);
  const auto f = gen_synthetic_full(40, -10.0, 10.0, 3, fine);
  double scale = 0.0;
  for (double v : f.clean) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < 40; ++i) CHECK(std::abs(c.clean[i] - f.clean[i]) < 1e-3 * scale);
}

TEST_CASE("csv round trip with missing cells") {
  const std::string path = "data_test.csv";
  {
    std::ofstream os(path);
    os << "t,y1,y2,x\n";
    os << "0.5,1.0,,0.9\n";
    os << "0.0,2.0,3.0,\n";
    os << "1.0,,4.0,0.1\n";
  }
  CsvSchema schema;
  schema.time_col = "t";
  schema.output_cols = {"y1", "y2"};
  schema.input_col = "x";
  const auto ds = load_csv(path, schema);
  CHECK(ds.t[0] == VecD{0.0, 0.5});  // sorted by time, missing dropped
  CHECK(ds.y[0] == VecD{2.0, 1.0});
  CHECK(ds.t[1] == VecD{0.0, 1.0});
  CHECK(ds.y[1] == VecD{3.0, 4.0});
  CHECK(ds.tx == VecD{0.5, 1.0});
  CHECK(ds.x == VecD{0.9, 0.1});

  save_csv(ds, schema, path);
  const auto again = load_csv(path, schema);
  CHECK(again.y[0] == ds.y[0]);
  CHECK(again.y[1] == ds.y[1]);
  CHECK(again.x == ds.x);
  std::remove(path.c_str());
}

TEST_CASE("csv parse failures carry line numbers") {
  const std::string path = "data_bad.csv";
  {
    std::ofstream os(path);
    os << "t,y\n0.0,1.0\n0.5,oops\n";
  }
  CsvSchema schema;
  schema.output_cols = {"y"};
  try {
    load_csv(path, schema);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  {
    std::ofstream os(path);
    os << "t,y\n1.0,\n2.0,\n";
  }
  CHECK_THROWS_AS(load_csv(path, schema), EmptySeries);
  std::remove(path.c_str());
}

TEST_CASE("input-output series of equal length load with matching sizes") {
  const std::string path = "data_tanks.csv";
  {
    std::ofstream os(path);
    os << "t,x,y\n";
    os.precision(10);
    for (int i = 0; i < 1024; ++i)
      os << i << "," << std::sin(0.01 * i) << "," << std::cos(0.02 * i) << "\n";
  }
  CsvSchema schema;
  schema.output_cols = {"y"};
  schema.input_col = "x";
  const auto ds = load_csv(path, schema);
  CHECK(ds.y[0].size() == 1024);
  CHECK(ds.x.size() == 1024);
  CHECK(ds.tx.size() == 1024);
  std::remove(path.c_str());
}

TEST_CASE("random-fraction split partitions the data") {
  const auto ds = gen_synthetic(1200, -20.0, 20.0, 11);
  SplitSpec spec;
  spec.mode = SplitSpec::Mode::RandomFraction;
  spec.fraction = 1.0 / 3.0;
  spec.seed = 5;
  const auto [train, test] = split(ds, spec);
  CHECK(train.y[0].size() == 400);
  CHECK(test.y[0].size() == 800);
  // multiset reconstruction: times are unique here, so sorted-merge equality works
  VecD merged = train.t[0];
  merged.insert(merged.end(), test.t[0].begin(), test.t[0].end());
  std::sort(merged.begin(), merged.end());
  CHECK(merged == ds.t[0]);

  SplitSpec all;
  all.fraction = 1.0;
  const auto [tr2, te2] = split(ds, all);
  CHECK(te2.y[0].empty());
  CHECK(tr2.y[0].size() == 1200);
}

TEST_CASE("contiguous block split matches the removal protocol") {
  TimeSeriesDataset ds;
  ds.t.assign(4, {});
  ds.y.assign(4, {});
  const std::size_t lens[4] = {1425, 1097, 1441, 1436};
  for (int d = 0; d < 4; ++d)
    for (std::size_t i = 0; i < lens[d]; ++i) {
      ds.t[std::size_t(d)].push_back(double(i));
      ds.y[std::size_t(d)].push_back(double(d) + 0.001 * double(i));
    }
  SplitSpec spec;
  spec.mode = SplitSpec::Mode::ContiguousBlock;
  spec.blocks = {{2, -1, 173}, {3, -1, 201}};
  const auto [train, test] = split(ds, spec);
  CHECK(test.y[2].size() == 173);
  CHECK(test.y[3].size() == 201);
  CHECK(test.y[0].empty());
  CHECK(train.y[2].size() == 1441 - 173);
  // removed block is contiguous
  for (std::size_t i = 1; i < test.t[2].size(); ++i)
    CHECK(test.t[2][i] == test.t[2][i - 1] + 1.0);

  SplitSpec bad;
  bad.mode = SplitSpec::Mode::ContiguousBlock;
  bad.blocks = {{0, 1400, 100}};
  CHECK_THROWS_AS(split(ds, bad), std::invalid_argument);
}

TEST_CASE("nmse and rmse definitions") {
  const VecD y = {1.0, 3.0, 5.0, 7.0};
  CHECK(nmse(y, y) == doctest::Approx(0.0));
  CHECK(rmse(y, y) == doctest::Approx(0.0));

  double mean = 4.0;
  const VecD pred_mean(4, mean);
  CHECK(nmse(pred_mean, y) == doctest::Approx(1.0));

  VecD shifted = y;
  for (auto& v : shifted) v += 1.0;
  // var(y) = 5, mse = 1
  CHECK(nmse(shifted, y) == doctest::Approx(1.0 / 5.0));
  CHECK(rmse(shifted, y) == doctest::Approx(1.0));

  CHECK_THROWS_AS(nmse({1.0, 1.0}, {2.0, 2.0}), UndefinedMetric);
}

TEST_CASE("nlpd mixture estimator") {
  // single sample exactly at the truth with unit noise
  MatD one(1, 1);
  one(0, 0) = 2.0;
  CHECK(nlpd_mixture(one, 1.0, {2.0}) == doctest::Approx(0.5 * std::log(2.0 * 3.14159265358979)));

  // identical samples reduce to the Gaussian NLPD
  MatD same(3, 1);
  for (int k = 0; k < 3; ++k) same(std::size_t(k), 0) = 1.5;
  const double sigma = 0.7, yv = 2.1;
  const double gauss = 0.5 * std::log(2.0 * 3.14159265358979) + std::log(sigma) +
                       0.5 * std::pow((yv - 1.5) / sigma, 2);
  CHECK(nlpd_mixture(same, sigma, {yv}) == doctest::Approx(gauss).epsilon(1e-12));

  // two-sample mixture against direct density evaluation
  MatD two(2, 1);
  two(0, 0) = 0.0;
  two(1, 0) = 1.0;
  const double s2 = 0.5;
  auto normal_pdf = [](double x, double mu, double sd) {
    return std::exp(-0.5 * std::pow((x - mu) / sd, 2)) / (sd * std::sqrt(2.0 * 3.14159265358979));
  };
  const double mix = 0.5 * (normal_pdf(0.8, 0.0, s2) + normal_pdf(0.8, 1.0, s2));
  CHECK(nlpd_mixture(two, s2, {0.8}) == doctest::Approx(-std::log(mix)).epsilon(1e-12));

  // permutation invariance over test points
  MatD smp(2, 3);
  smp(0, 0) = 0.1, smp(0, 1) = 0.4, smp(0, 2) = -0.2;
  smp(1, 0) = 0.0, smp(1, 1) = 0.5, smp(1, 2) = 0.3;
  MatD perm(2, 3);
  const int order[3] = {2, 0, 1};
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i) perm(std::size_t(k), std::size_t(i)) = smp(std::size_t(k), std::size_t(order[i]));
  CHECK(nlpd_mixture(smp, 0.3, {0.2, 0.4, 0.1}) ==
        doctest::Approx(nlpd_mixture(perm, 0.3, {0.1, 0.2, 0.4})).epsilon(1e-12));
}

TEST_CASE("standardize round trip and metric consistency") {
  TimeSeriesDataset ds;
  ds.t.assign(1, {0, 1, 2, 3});
  ds.y.assign(1, {10.0, 12.0, 14.0, 16.0});
  const auto p = compute_standardize(ds);
  const auto std_ds = apply_standardize(ds, p);
  double mean = 0.0;
  for (double v : std_ds.y[0]) mean += v;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  double var = 0.0;
  for (double v : std_ds.y[0]) var += v * v;
  CHECK(var / 4.0 == doctest::Approx(1.0).epsilon(1e-12));

  const VecD back = destandardize(std_ds.y[0], p.shift[0], p.scale[0]);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back[i] == doctest::Approx(ds.y[0][i]).epsilon(1e-12));

  // metrics computed after destandardizing match direct computation
  VecD pred_std = std_ds.y[0];
  for (auto& v : pred_std) v += 0.1;
  const VecD pred = destandardize(pred_std, p.shift[0], p.scale[0]);
  VecD direct = ds.y[0];
  for (auto& v : direct) v += 0.1 * p.scale[0];
  CHECK(rmse(pred, ds.y[0]) == doctest::Approx(rmse(direct, ds.y[0])).epsilon(1e-12));
}
