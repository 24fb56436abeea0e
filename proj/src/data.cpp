#include "metadg/data.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "metadg/array_io.hpp"
#include "metadg/rng.hpp"

namespace metadg {

namespace {

constexpr DatasetInfo kDatasets[] = {
    {"PEMS03", 358, 26185, 5 * kStepsPerDay},  // 2018-09-01, Saturday
    {"PEMS04", 307, 16992, 0},                 // 2018-01-01, Monday
    {"PEMS07", 883, 28224, 0},                 // 2017-05-01, Monday
    {"PEMS08", 170, 17856, 4 * kStepsPerDay},  // 2016-07-01, Friday
};

std::string dims(std::int64_t steps, std::int64_t nodes) {
  return "[" + std::to_string(steps) + " x " + std::to_string(nodes) + "]";
}

}  // namespace

std::optional<DatasetInfo> find_dataset_info(const std::string& id) {
  for (const auto& d : kDatasets) {
    if (id == d.id) return d;
  }
  return std::nullopt;
}

std::filesystem::path default_data_root() {
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  return "data";
}

RawSeries series_from_array(const DenseArray& array) {
  RawSeries s;
  const auto& shape = array.shape;
  if (shape.size() == 1) {
    s.steps = shape[0];
    s.num_nodes = 1;
    s.values = array.values;
  } else if (shape.size() == 2) {
    s.steps = shape[0];
    s.num_nodes = shape[1];
    s.values = array.values;
  } else if (shape.size() == 3) {
    s.steps = shape[0];
    s.num_nodes = shape[1];
    const std::int64_t channels = shape[2];
    s.values.resize(static_cast<std::size_t>(s.steps * s.num_nodes));
    for (std::int64_t i = 0; i < s.steps * s.num_nodes; ++i) {
      s.values[static_cast<std::size_t>(i)] = array.values[static_cast<std::size_t>(i * channels)];
    }
  } else {
    throw DatasetError("expected a [T], [T x N] or [T x N x C] array, got rank " +
                       std::to_string(shape.size()));
  }
  return s;
}

RawSeries load_dataset(const std::string& id, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const auto info = find_dataset_info(id);
  fs::path file;
  if (info) {
    for (const char* ext : {".npz", ".npy", ".csv"}) {
      for (const fs::path& cand : {root / id / (id + ext), root / (id + ext)}) {
        if (file.empty() && fs::exists(cand)) file = cand;
      }
    }
    if (file.empty()) {
      throw DatasetError("dataset " + id + " not found under " + root.string() +
                         " (set " + kDataRootEnv + ")");
    }
  } else {
    file = fs::path(id).is_absolute() || fs::exists(id) ? fs::path(id) : root / id;
    if (!fs::exists(file)) throw DatasetError("dataset file not found: " + file.string());
  }
  RawSeries s = series_from_array(read_dense_array(file));
  if (info) {
    if (s.steps != info->steps || s.num_nodes != info->num_nodes) {
      throw DatasetError(id + ": expected shape " + dims(info->steps, info->num_nodes) +
                         ", got " + dims(s.steps, s.num_nodes));
    }
    s.start_offset = info->start_offset;
  }
  interpolate_missing(s);
  return s;
}

void save_series(const RawSeries& series, const std::filesystem::path& path) {
  write_npy(path, DenseArray{{series.steps, series.num_nodes}, series.values});
}

void interpolate_missing(RawSeries& s) {
  for (std::int64_t n = 0; n < s.num_nodes; ++n) {
    auto v = [&](std::int64_t t) -> double& {
      return s.values[static_cast<std::size_t>(t * s.num_nodes + n)];
    };
    std::int64_t prev = -1;
    for (std::int64_t t = 0; t < s.steps; ++t) {
      if (std::isnan(v(t))) continue;
      if (prev < 0) {
        for (std::int64_t k = 0; k < t; ++k) v(k) = v(t);
      } else if (t - prev > 1) {
        const double a = v(prev), b = v(t);
        for (std::int64_t k = prev + 1; k < t; ++k) {
          const double w = static_cast<double>(k - prev) / static_cast<double>(t - prev);
          v(k) = a + w * (b - a);
        }
      }
      prev = t;
    }
    if (prev < 0) {
      for (std::int64_t t = 0; t < s.steps; ++t) v(t) = 0.0;
    } else {
      for (std::int64_t t = prev + 1; t < s.steps; ++t) v(t) = v(prev);
    }
  }
}

TimeFeatures time_features(std::int64_t global_step, std::int64_t start_offset) {
  const std::int64_t s = global_step + start_offset;
  TimeFeatures f;
  f.tod = static_cast<int>(((s % kStepsPerDay) + kStepsPerDay) % kStepsPerDay);
  f.dow = static_cast<int>((((s / kStepsPerDay) % 7) + 7) % 7);
  f.tau = global_step;
  return f;
}

Normalizer Normalizer::fit(std::span<const double> values) {
  if (values.empty()) throw DatasetError("cannot fit normalizer on an empty split");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-9 * std::max(1.0, std::abs(mean)))) {
    throw DatasetError("training flow has zero variance; z-score normalization undefined");
  }
  return {mean, sd};
}

std::vector<std::int64_t> window_starts(std::int64_t begin, std::int64_t end, std::int64_t length) {
  if (end - begin < length) {
    throw DatasetError("split [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") is shorter than one window of " + std::to_string(length) + " steps");
  }
  std::vector<std::int64_t> starts;
  for (std::int64_t s = begin; s + length <= end; ++s) starts.push_back(s);
  return starts;
}

DataSplits split_and_window(const RawSeries& series, const ModelConfig& cfg) {
  const std::int64_t length = cfg.horizon_in + cfg.horizon_out;
  if (series.steps < length) {
    throw DatasetError("series has " + std::to_string(series.steps) +
                       " steps, fewer than one window (" + std::to_string(length) + ")");
  }
  const auto cut = [&](double ratio) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(series.steps) * ratio + 1e-9));
  };
  DataSplits d;
  d.train = {0, cut(cfg.train_ratio), {}};
  d.val = {d.train.end, cut(cfg.train_ratio + cfg.val_ratio), {}};
  d.test = {d.val.end, series.steps, {}};
  for (SplitRange* r : {&d.train, &d.val, &d.test}) {
    r->window_starts = window_starts(r->begin, r->end, length);
  }
  if (cfg.max_train_windows > 0 &&
      static_cast<std::int64_t>(d.train.window_starts.size()) > cfg.max_train_windows) {
    d.train.window_starts.resize(static_cast<std::size_t>(cfg.max_train_windows));
  }
  if (cfg.max_eval_windows > 0) {
    for (SplitRange* r : {&d.val, &d.test}) {
      if (static_cast<std::int64_t>(r->window_starts.size()) > cfg.max_eval_windows) {
        r->window_starts.resize(static_cast<std::size_t>(cfg.max_eval_windows));
      }
    }
  }
  d.normalizer = Normalizer::fit(std::span<const double>(
      series.values.data(), static_cast<std::size_t>(d.train.end * series.num_nodes)));
  return d;
}

TrafficWindowBatch make_batch(const RawSeries& series, const Normalizer& norm,
                              std::span<const std::int64_t> starts, std::int64_t horizon_in,
                              std::int64_t horizon_out) {
  TrafficWindowBatch b;
  b.batch = static_cast<std::int64_t>(starts.size());
  b.horizon_in = horizon_in;
  b.horizon_out = horizon_out;
  b.num_nodes = series.num_nodes;
  const std::int64_t n = series.num_nodes;
  b.x = Tensor::zeros({b.batch, horizon_in, n, 3});
  b.y = Tensor::zeros({b.batch, horizon_out, n});
  auto x = b.x.data();
  auto y = b.y.data();
  for (std::int64_t i = 0; i < b.batch; ++i) {
    const std::int64_t s0 = starts[static_cast<std::size_t>(i)];
    if (s0 < 0 || s0 + horizon_in + horizon_out > series.steps) {
      throw DatasetError("window start " + std::to_string(s0) + " out of range");
    }
    for (std::int64_t t = 0; t < horizon_in; ++t) {
      const TimeFeatures f = time_features(s0 + t, series.start_offset);
      b.x_time.push_back(f);
      for (std::int64_t k = 0; k < n; ++k) {
        double* px = &x[static_cast<std::size_t>(((i * horizon_in + t) * n + k) * 3)];
        px[0] = norm.forward(series.at(s0 + t, k));
        px[1] = static_cast<double>(f.tod) / static_cast<double>(kStepsPerDay);
        px[2] = static_cast<double>(f.dow) / 7.0;
      }
    }
    for (std::int64_t t = 0; t < horizon_out; ++t) {
      const std::int64_t g = s0 + horizon_in + t;
      b.y_time.push_back(time_features(g, series.start_offset));
      for (std::int64_t k = 0; k < n; ++k) {
        y[static_cast<std::size_t>((i * horizon_out + t) * n + k)] = series.at(g, k);
      }
    }
  }
  return b;
}

RawSeries make_synthetic(std::int64_t num_nodes, std::int64_t steps, std::uint64_t seed,
                         const SyntheticOptions& opt) {
  if (num_nodes < 1 || steps < 1) throw DatasetError("synthetic series needs >= 1 node and step");
  Rng rng(seed);
  std::vector<double> base(static_cast<std::size_t>(num_nodes));
  std::vector<double> amp(base.size());
  std::vector<std::int64_t> phase(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    base[k] = 50.0 + 50.0 * rng.uniform();
    amp[k] = 100.0 + 100.0 * rng.uniform();
    phase[k] = static_cast<std::int64_t>(std::floor(static_cast<double>(kStepsPerDay) * rng.uniform()));
  }
  RawSeries s;
  s.steps = steps;
  s.num_nodes = num_nodes;
  s.start_offset = opt.start_offset;
  s.values.resize(static_cast<std::size_t>(steps * num_nodes));
  std::vector<double> u(base.size(), 0.0), next(base.size());
  for (std::int64_t t = 0; t < steps; ++t) {
    for (std::int64_t k = 0; k < num_nodes; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double left = u[static_cast<std::size_t>((k + num_nodes - 1) % num_nodes)];
      const double right = u[static_cast<std::size_t>((k + 1) % num_nodes)];
      const double z = rng.normal();
      next[kk] = opt.persistence * u[kk] + opt.coupling * (0.5 * (left + right) - u[kk]) +
                 opt.noise * amp[kk] * z;
    }
    u.swap(next);
    for (std::int64_t k = 0; k < num_nodes; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double angle = 2.0 * std::numbers::pi *
                           static_cast<double>((t + phase[kk]) % kStepsPerDay) /
                           static_cast<double>(kStepsPerDay);
      const double seasonal = base[kk] + amp[kk] * 0.5 * (1.0 - std::cos(angle));
      s.values[static_cast<std::size_t>(t * num_nodes + k)] = std::max(0.0, seasonal + u[kk]);
    }
  }
  return s;
}

}  // namespace metadg
