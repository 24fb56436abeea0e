#include "metadg/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace metadg {

MetricAccumulator::MetricAccumulator(std::int64_t horizons, double mape_threshold)
    : sums_(static_cast<std::size_t>(horizons)), threshold_(mape_threshold) {}

void MetricAccumulator::add(std::span<const double> pred, std::span<const double> truth,
                            std::int64_t windows, std::int64_t num_nodes) {
  const auto horizons = static_cast<std::int64_t>(sums_.size());
  const auto expected = static_cast<std::size_t>(windows * horizons * num_nodes);
  if (pred.size() != expected || truth.size() != expected) {
    throw std::invalid_argument("metrics: prediction/truth size mismatch");
  }
  for (std::int64_t m = 0; m < windows; ++m) {
    for (std::int64_t h = 0; h < horizons; ++h) {
      Sums& s = sums_[static_cast<std::size_t>(h)];
      for (std::int64_t k = 0; k < num_nodes; ++k) {
        const auto i = static_cast<std::size_t>((m * horizons + h) * num_nodes + k);
        const double e = pred[i] - truth[i];
        s.abs += std::abs(e);
        s.sq += e * e;
        ++s.n;
        if (truth[i] >= threshold_) {
          s.ape += std::abs(e) / truth[i];
          s.abs_masked += std::abs(e);
          ++s.n_mape;
        }
      }
    }
  }
}

std::int64_t MetricAccumulator::count() const {
  std::int64_t n = 0;
  for (const auto& s : sums_) n += s.n;
  return n;
}

MetricReport MetricAccumulator::report() const {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  auto finish = [](const Sums& s) {
    ErrorMetrics m;
    if (s.n == 0) return ErrorMetrics{nan, nan, nan, nan};
    m.mae = s.abs / static_cast<double>(s.n);
    m.rmse = std::sqrt(s.sq / static_cast<double>(s.n));
    m.mape = s.n_mape ? 100.0 * s.ape / static_cast<double>(s.n_mape) : nan;
    m.masked_mae = s.n_mape ? s.abs_masked / static_cast<double>(s.n_mape) : nan;
    return m;
  };
  MetricReport r;
  Sums total;
  for (const auto& s : sums_) {
    r.per_horizon.push_back(finish(s));
    total.abs += s.abs;
    total.sq += s.sq;
    total.ape += s.ape;
    total.abs_masked += s.abs_masked;
    total.n += s.n;
    total.n_mape += s.n_mape;
  }
  r.overall = finish(total);
  return r;
}

MetricReport compute_metrics(std::span<const double> pred, std::span<const double> truth,
                             std::int64_t windows, std::int64_t horizons, std::int64_t num_nodes,
                             double mape_threshold) {
  MetricAccumulator acc(horizons, mape_threshold);
  acc.add(pred, truth, windows, num_nodes);
  return acc.report();
}

void write_metric_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "horizon,mae,rmse,mape\n";
  for (std::size_t h = 0; h < report.per_horizon.size(); ++h) {
    const auto& m = report.per_horizon[h];
    out << h + 1 << ',' << m.mae << ',' << m.rmse << ',' << m.mape << '\n';
  }
  out << "average," << report.overall.mae << ',' << report.overall.rmse << ','
      << report.overall.mape << '\n';
}

}  // namespace metadg
