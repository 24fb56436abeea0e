#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace metadg {

/// MAE, RMSE and MAPE (%) on raw scale. `mape` is NaN when every truth value
/// fell below the masking threshold.
struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  double masked_mae = 0.0;  // MAE over the entries MAPE keeps
};

struct MetricReport {
  ErrorMetrics overall;
  std::vector<ErrorMetrics> per_horizon;  // horizons 1..T'
};

/// Streams [M x T' x N] prediction/truth blocks; sums are kept per horizon so
/// any batching of the same windows yields the same report.
class MetricAccumulator {
 public:
  MetricAccumulator(std::int64_t horizons, double mape_threshold = 1.0);

  void add(std::span<const double> pred, std::span<const double> truth, std::int64_t windows,
           std::int64_t num_nodes);
  MetricReport report() const;
  std::int64_t count() const;

 private:
  struct Sums {
    double abs = 0.0, sq = 0.0, ape = 0.0, abs_masked = 0.0;
    std::int64_t n = 0, n_mape = 0;
  };
  std::vector<Sums> sums_;
  double threshold_;
};

MetricReport compute_metrics(std::span<const double> pred, std::span<const double> truth,
                             std::int64_t windows, std::int64_t horizons, std::int64_t num_nodes,
                             double mape_threshold = 1.0);

/// CSV with header `horizon,mae,rmse,mape`: one row per horizon, then
/// `average`.
void write_metric_csv(const std::filesystem::path& path, const MetricReport& report);

}  // namespace metadg
