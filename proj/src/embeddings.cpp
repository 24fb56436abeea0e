#include "metadg/embeddings.hpp"

#include <cmath>
#include <numbers>

#include "metadg/ops.hpp"

namespace metadg {

Tensor EmbeddingTable::time_embedding(int tod, int dow) const {
  const TimeFeatures f{tod, dow, 0};
  return reshape(time_embedding(std::span<const TimeFeatures>(&f, 1)), {tod_pool.dim(1) + dow_pool.dim(1)});
}

Tensor EmbeddingTable::time_embedding(std::span<const TimeFeatures> times) const {
  std::vector<std::int64_t> tod, dow;
  tod.reserve(times.size());
  dow.reserve(times.size());
  for (const auto& f : times) {
    tod.push_back(f.tod);
    dow.push_back(f.dow);
  }
  return concat_last(gather_rows(tod_pool, tod), gather_rows(dow_pool, dow));
}

std::vector<Tensor> EmbeddingTable::enhance_time(const TrafficWindowBatch& batch, Side side) const {
  const std::int64_t steps = side == Side::encoder ? batch.horizon_in : batch.horizon_out;
  const std::int64_t anchor_step = side == Side::encoder ? 0 : batch.horizon_in - 1;
  std::vector<TimeFeatures> anchor_times;
  for (std::int64_t b = 0; b < batch.batch; ++b) anchor_times.push_back(batch.in_time(b, anchor_step));
  const Tensor anchor = time_embedding(anchor_times);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    std::vector<TimeFeatures> current;
    for (std::int64_t b = 0; b < batch.batch; ++b) {
      current.push_back(side == Side::encoder ? batch.in_time(b, t) : batch.out_time(b, t));
    }
    out.push_back(concat_last(anchor, time_embedding(current)));
  }
  return out;
}

Tensor EmbeddingTable::continuous_time(double tau) const {
  return continuous_time_encode(ctime_omega, tau);
}

std::vector<double> initial_frequencies(std::int64_t d_c) {
  const double lo = 1.0 / static_cast<double>(kStepsPerWeek);
  const double hi = 0.5;
  std::vector<double> w(static_cast<std::size_t>(d_c));
  for (std::int64_t i = 0; i < d_c; ++i) {
    const double frac = d_c > 1 ? static_cast<double>(i) / static_cast<double>(d_c - 1) : 0.0;
    w[static_cast<std::size_t>(i)] = 2.0 * std::numbers::pi * lo * std::pow(hi / lo, frac);
  }
  return w;
}

EmbeddingTable make_embedding_table(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  auto bound = [](std::int64_t dim) { return 1.0 / std::sqrt(static_cast<double>(dim)); };
  EmbeddingTable e;
  e.node_static = store.add("node_static", uniform_tensor({cfg.num_nodes, cfg.d_s}, bound(cfg.d_s), rng));
  e.tod_pool = store.add("tod_pool", uniform_tensor({kStepsPerDay, cfg.d_tod}, bound(cfg.d_tod), rng));
  e.dow_pool = store.add("dow_pool", uniform_tensor({7, cfg.d_dow}, bound(cfg.d_dow), rng));
  e.ctime_omega = store.add("ctime_omega", Tensor::from({cfg.d_c}, initial_frequencies(cfg.d_c)));
  return e;
}

}  // namespace metadg
