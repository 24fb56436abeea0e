#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "metadg/data.hpp"

using namespace metadg;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = METADG_FIXTURES;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metadg_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RawSeries ramp_series(std::int64_t steps, std::int64_t nodes) {
  RawSeries s;
  s.steps = steps;
  s.num_nodes = nodes;
  for (std::int64_t t = 0; t < steps; ++t) {
    for (std::int64_t n = 0; n < nodes; ++n) s.values.push_back(static_cast<double>(t * 10 + n));
  }
  return s;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("npy fixtures of every dtype") {
  for (const char* f : {"flow_f8.npy", "flow_f4.npy"}) {
    const DenseArray a = read_dense_array(kFixtures / f);
    CHECK(a.shape == std::vector<std::int64_t>{5, 3});
    for (std::size_t i = 0; i < 15; ++i) CHECK(a.values[i] == 1.5 * static_cast<double>(i));
  }
  const DenseArray i2 = read_npy(kFixtures / "flow_i2.npy");
  CHECK(i2.shape == std::vector<std::int64_t>{5, 3});
  CHECK(i2.values[14] == 14.0);
}

TEST_CASE("npz members, deflated and stored") {
  const DenseArray d = read_npz(kFixtures / "flow_3d_deflate.npz");
  CHECK(d.shape == std::vector<std::int64_t>{5, 3, 2});
  CHECK(d.values[2 * 4 + 0] == 6.0);
  CHECK(d.values[2 * 4 + 1] == -6.0);
  const RawSeries s = series_from_array(d);
  CHECK(s.steps == 5);
  CHECK(s.num_nodes == 3);
  CHECK(s.at(4, 2) == 21.0);  // channel 0 only

  const DenseArray stored = read_npz(kFixtures / "flow_stored.npz");
  CHECK(stored.shape == std::vector<std::int64_t>{5, 3});
  CHECK(stored.values[1] == 1.5);
  CHECK(read_npz(kFixtures / "flow_stored.npz", "other").shape == std::vector<std::int64_t>{2});
  CHECK_THROWS(read_npz(kFixtures / "flow_stored.npz", "missing"));
}

TEST_CASE("CSV gaps are interpolated along time") {
  const fs::path root = scratch("csv");
  fs::copy_file(kFixtures / "flow_gaps.csv", root / "gaps.csv");
  const RawSeries s = load_dataset("gaps.csv", root);
  CHECK(s.steps == 4);
  CHECK(s.num_nodes == 2);
  CHECK(s.at(1, 0) == doctest::Approx(2.0));
  CHECK(s.at(2, 1) == doctest::Approx(30.0));
  for (double v : s.values) CHECK(std::isfinite(v));
}

TEST_CASE("edge gaps take the nearest value") {
  RawSeries s;
  s.steps = 4;
  s.num_nodes = 2;
  s.values = {NAN, NAN, 5, NAN, NAN, NAN, 7, NAN};
  interpolate_missing(s);
  CHECK(s.values == std::vector<double>{5, 0, 5, 0, 6, 0, 7, 0});
}

TEST_CASE("passthrough file: 1 node, 100 steps") {
  const fs::path root = scratch("pass");
  RawSeries s = ramp_series(100, 1);
  save_series(s, root / "tiny.npy");
  const RawSeries back = load_dataset("tiny.npy", root);
  CHECK(back.steps == 100);
  CHECK(back.num_nodes == 1);
  CHECK(back.values == s.values);
}

TEST_CASE("benchmark ids are checked against their published shape") {
  CHECK(find_dataset_info("PEMS04")->num_nodes == 307);
  CHECK(find_dataset_info("PEMS04")->steps == 16992);
  CHECK(find_dataset_info("PEMS07")->num_nodes == 883);
  CHECK(find_dataset_info("PEMS07")->steps == 28224);
  CHECK(find_dataset_info("PEMS08")->steps == 17856);
  CHECK_FALSE(find_dataset_info("METR-LA").has_value());

  const fs::path root = scratch("bench");
  save_series(ramp_series(50, 170), root / "PEMS08.npy");
  try {
    load_dataset("PEMS08", root);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("17856") != std::string::npos);
    CHECK(msg.find("50") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset("PEMS04", root), DatasetError);
}

TEST_CASE("data root comes from the environment") {
  ::setenv(kDataRootEnv, "/data/somewhere", 1);
  CHECK(default_data_root() == fs::path("/data/somewhere"));
  ::unsetenv(kDataRootEnv);
}

TEST_CASE("window counts and 6:2:2 split") {
  CHECK(window_starts(0, 30, 24).size() == 7);
  CHECK_THROWS_AS(window_starts(0, 23, 24), DatasetError);

  ModelConfig cfg;
  cfg.horizon_in = 3;
  cfg.horizon_out = 2;
  const DataSplits d = split_and_window(ramp_series(100, 2), cfg);
  CHECK(d.train.end - d.train.begin == 60);
  CHECK(d.val.end - d.val.begin == 20);
  CHECK(d.test.end - d.test.begin == 20);
  CHECK(d.train.window_starts.size() == 56);
  CHECK(d.val.window_starts.size() == 16);
  CHECK(d.test.window_starts.front() == 80);
  CHECK(d.test.window_starts.back() == 95);

  cfg.horizon_in = cfg.horizon_out = 12;
  CHECK_THROWS_AS(split_and_window(ramp_series(100, 2), cfg), DatasetError);
}

TEST_CASE("no window crosses a split boundary") {
  ModelConfig cfg;
  const RawSeries s = make_synthetic(3, 1000, 1);
  const DataSplits d = split_and_window(s, cfg);
  const std::int64_t len = cfg.horizon_in + cfg.horizon_out;
  CHECK(d.train.window_starts.back() + len - 1 < d.val.begin);
  CHECK(d.val.window_starts.back() + len - 1 < d.test.begin);
  CHECK(d.test.window_starts.back() + len <= s.steps);
}

TEST_CASE("normalizer sees only the training part") {
  ModelConfig cfg;
  RawSeries s = make_synthetic(3, 1000, 2);
  const DataSplits a = split_and_window(s, cfg);
  for (std::int64_t t = a.val.begin; t < s.steps; ++t) {
    for (std::int64_t n = 0; n < 3; ++n) s.values[static_cast<std::size_t>(t * 3 + n)] *= 7.0;
  }
  const DataSplits b = split_and_window(s, cfg);
  CHECK(a.normalizer.mean == b.normalizer.mean);
  CHECK(a.normalizer.std == b.normalizer.std);

  const Normalizer n = a.normalizer;
  for (double x : {0.0, 1.0, 123.456, 987.0}) {
    CHECK(std::abs(n.inverse(n.forward(x)) - x) <= 1e-6 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("constant training flow is rejected") {
  RawSeries s;
  s.steps = 100;
  s.num_nodes = 2;
  s.values.assign(200, 4.0);
  for (std::size_t i = 120; i < 200; ++i) s.values[i] = static_cast<double>(i);
  ModelConfig cfg;
  cfg.horizon_in = cfg.horizon_out = 2;
  CHECK_THROWS_AS(split_and_window(s, cfg), DatasetError);
}

TEST_CASE("time features") {
  const TimeFeatures f = time_features(0, 0);
  CHECK(f.tod == 0);
  CHECK(f.dow == 0);
  CHECK(time_features(287, 0).tod == 287);
  CHECK(time_features(288, 0).dow == 1);
  CHECK(time_features(10, 280).tod == 2);
  CHECK(time_features(10, 280).dow == 1);
  for (std::int64_t t = 0; t < 3000; t += 7) {
    const TimeFeatures a = time_features(t, 513);
    const TimeFeatures b = time_features(t + kStepsPerWeek, 513);
    CHECK(a.tod == b.tod);
    CHECK(a.dow == b.dow);
    CHECK(a.tau == t);
    CHECK(a.tod == (t + 513) % 288);
  }
}

TEST_CASE("batches: normalized inputs, raw targets") {
  const RawSeries s = make_synthetic(4, 400, 3, {.start_offset = 100});
  const Normalizer n = Normalizer::fit(s.values);
  const std::vector<std::int64_t> starts{5, 200};
  const TrafficWindowBatch b = make_batch(s, n, starts, 3, 2);
  CHECK(b.x.shape() == Shape{2, 3, 4, 3});
  CHECK(b.y.shape() == Shape{2, 2, 4});
  CHECK(b.x.at({1, 2, 3, 0}) == doctest::Approx(n.forward(s.at(202, 3))));
  CHECK(b.x.at({1, 2, 3, 1}) == doctest::Approx(time_features(202, 100).tod / 288.0));
  CHECK(b.x.at({1, 2, 3, 2}) == doctest::Approx(time_features(202, 100).dow / 7.0));
  CHECK(b.y.at({1, 1, 2}) == s.at(204, 2));
  CHECK(b.out_time(1, 0).tau == 203);
  CHECK_THROWS_AS(make_batch(s, n, std::vector<std::int64_t>{396}, 3, 2), DatasetError);
}

TEST_CASE("synthetic generator") {
  const RawSeries a = make_synthetic(4, 2016, 0);
  const RawSeries b = make_synthetic(4, 2016, 0);
  CHECK(a.values == b.values);
  CHECK(a.values != make_synthetic(4, 2016, 1).values);
  for (double v : a.values) CHECK(v >= 0.0);

  const RawSeries p = make_synthetic(3, 1000, 5, {.noise = 0.0});
  for (std::int64_t t = 0; t + 288 < p.steps; ++t) {
    for (std::int64_t n = 0; n < 3; ++n) CHECK(p.at(t, n) == p.at(t + 288, n));
  }
}

TEST_CASE("zero coupling gives independent innovations") {
  const std::int64_t nodes = 4, steps = 20000;
  const SyntheticOptions opt{.noise = 0.05, .coupling = 0.0};
  const RawSeries noisy = make_synthetic(nodes, steps, 8, opt);
  const RawSeries clean = make_synthetic(nodes, steps, 8, {.noise = 0.0, .coupling = 0.0});
  std::vector<std::vector<double>> innov(nodes);
  for (std::int64_t n = 0; n < nodes; ++n) {
    for (std::int64_t t = 1; t < steps; ++t) {
      const double u = noisy.at(t, n) - clean.at(t, n);
      const double u_prev = noisy.at(t - 1, n) - clean.at(t - 1, n);
      innov[n].push_back(u - opt.persistence * u_prev);
    }
  }
  for (std::int64_t i = 0; i < nodes; ++i) {
    for (std::int64_t j = i + 1; j < nodes; ++j) CHECK(std::abs(correlation(innov[i], innov[j])) < 0.05);
  }
}
