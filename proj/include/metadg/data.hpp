#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metadg/array_io.hpp"
#include "metadg/config.hpp"
#include "metadg/tensor.hpp"

namespace metadg {

inline constexpr std::int64_t kStepsPerDay = 288;
inline constexpr std::int64_t kStepsPerWeek = 7 * kStepsPerDay;

/// Published shape and calendar anchor of a benchmark dataset.
struct DatasetInfo {
  const char* id;
  std::int64_t num_nodes;
  std::int64_t steps;
  /// Steps from Monday 00:00 to the first sample.
  std::int64_t start_offset;
};

std::optional<DatasetInfo> find_dataset_info(const std::string& id);

/// Flow values [steps x num_nodes], one row per 5-minute interval.
struct RawSeries {
  std::int64_t steps = 0;
  std::int64_t num_nodes = 0;
  std::vector<double> values;
  std::int64_t start_offset = 0;
  int interval_minutes = 5;

  double at(std::int64_t t, std::int64_t n) const {
    return values[static_cast<std::size_t>(t * num_nodes + n)];
  }
};

/// Error raised when a file does not match the dataset's published shape.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment variable naming the dataset root directory.
inline constexpr const char* kDataRootEnv = "METADG_DATA_ROOT";
std::filesystem::path default_data_root();

/// Loads PEMS03/04/07/08 from `root` (looks for <ID>.npz/.npy/.csv directly
/// or inside <ID>/) and checks the published shape; any other id is taken as
/// a file path (relative to `root` when not absolute). Channel 0 of 3-D
/// arrays is the flow. Missing values are interpolated.
RawSeries load_dataset(const std::string& id, const std::filesystem::path& root);
RawSeries series_from_array(const DenseArray& array);
void save_series(const RawSeries& series, const std::filesystem::path& path);

/// Replaces NaN by linear interpolation along time; leading/trailing gaps
/// take the nearest observed value, all-NaN columns become 0.
void interpolate_missing(RawSeries& series);

struct TimeFeatures {
  int tod = 0;           // [0, 287]
  int dow = 0;           // [0, 6], Monday = 0
  std::int64_t tau = 0;  // global step index
};

TimeFeatures time_features(std::int64_t global_step, std::int64_t start_offset);

/// Z-score statistics of the training flow.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double forward(double x) const { return (x - mean) / std; }
  double inverse(double z) const { return z * std + mean; }

  /// Population statistics; throws DatasetError when the spread is zero.
  static Normalizer fit(std::span<const double> values);
};

struct SplitRange {
  std::int64_t begin = 0;  // first raw step
  std::int64_t end = 0;    // one past last raw step
  std::vector<std::int64_t> window_starts;
};

struct DataSplits {
  SplitRange train, val, test;
  Normalizer normalizer;
};

/// Stride-1 windows of `length` steps fully inside [begin, end).
std::vector<std::int64_t> window_starts(std::int64_t begin, std::int64_t end, std::int64_t length);

/// Chronological train/val/test split, windows inside each part, normalizer
/// fit on the training part only.
DataSplits split_and_window(const RawSeries& series, const ModelConfig& cfg);

struct TrafficWindowBatch {
  std::int64_t batch = 0;
  std::int64_t horizon_in = 0;
  std::int64_t horizon_out = 0;
  std::int64_t num_nodes = 0;
  Tensor x;  // [B, T, N, 3]: normalized flow, tod/288, dow/7
  Tensor y;  // [B, T', N] raw scale
  std::vector<TimeFeatures> x_time;  // B*T, row-major
  std::vector<TimeFeatures> y_time;  // B*T'

  const TimeFeatures& in_time(std::int64_t b, std::int64_t t) const {
    return x_time[static_cast<std::size_t>(b * horizon_in + t)];
  }
  const TimeFeatures& out_time(std::int64_t b, std::int64_t t) const {
    return y_time[static_cast<std::size_t>(b * horizon_out + t)];
  }
};

TrafficWindowBatch make_batch(const RawSeries& series, const Normalizer& norm,
                              std::span<const std::int64_t> starts, std::int64_t horizon_in,
                              std::int64_t horizon_out);

struct SyntheticOptions {
  double noise = 0.05;        // innovation std as a fraction of each node's amplitude
  double coupling = 0.2;      // diffusion strength to the two ring neighbours
  double persistence = 0.8;   // AR(1) coefficient of the anomaly process
  std::int64_t start_offset = 0;
};

/// Deterministic desk-scale series. With Rng(seed), per node in order draw
/// base = 50 + 50u, amp = 100 + 100u, phase = floor(288u); the seasonal part
/// is base + amp * (1 - cos(2 pi ((t + phase) mod 288) / 288)) / 2. The
/// anomaly u_t = persistence*u_{t-1} + coupling*(mean of ring neighbours at
/// t-1 - u_{t-1}) + noise*amp*z, z ~ N(0,1) drawn t-major then node. Values
/// are clamped at 0.
RawSeries make_synthetic(std::int64_t num_nodes, std::int64_t steps, std::uint64_t seed,
                         const SyntheticOptions& options = {});

}  // namespace metadg
