#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metadg/config.hpp"
#include "metadg/data.hpp"
#include "metadg/model.hpp"
#include "metadg/params.hpp"
#include "metadg/rng.hpp"
#include "oracle/oracle.hpp"

namespace support {

using metadg::Tensor;

Tensor random_tensor(const metadg::Shape& shape, metadg::Rng& rng, double lo = -1.0, double hi = 1.0);
std::vector<double> values(const Tensor& t);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

/// Named copies of every parameter, the form the oracle consumes.
oracle::Params snapshot(const metadg::ParameterStore& store);

/// Overwrites every parameter with uniform(-scale, scale) draws (zero-init
/// tensors included) and resets ctime_omega to positive frequencies.
void randomize(metadg::ParameterStore& store, metadg::Rng& rng, double scale = 0.5);

/// Small model config: N nodes, T = T' = horizon, dropout 0.
metadg::ModelConfig tiny_config(std::int64_t nodes = 4, std::int64_t horizon = 2);

oracle::CellDims cell_dims(const metadg::ModelConfig& cfg, std::int64_t batch);

/// Random batch with consistent time features (B windows from a synthetic series).
metadg::TrafficWindowBatch tiny_batch(const metadg::ModelConfig& cfg, std::int64_t batch,
                                      std::uint64_t seed, metadg::Normalizer* norm = nullptr,
                                      metadg::RawSeries* series_out = nullptr);

oracle::WindowTimes window_times(const metadg::TrafficWindowBatch& batch);

/// Central-difference gradient of `f` w.r.t. every entry of `t`.
std::vector<double> numeric_grad(Tensor t, const std::function<double()>& f, double h = 1e-5);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
double max_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                     double floor = 1e-6);

/// Gradient check of a scalar-valued op over the given inputs: builds the
/// graph with `build`, backprops sum(out * weights) with fixed random weights.
double op_grad_error(std::vector<Tensor> inputs,
                     const std::function<Tensor(const std::vector<Tensor>&)>& build,
                     std::uint64_t seed = 7);

/// Worst-case violations of the structural invariants over every traced step.
struct InvariantReport {
  double attention_row_error = 0.0;  // max |row sum - 1|
  double adjacency_row_error = 0.0;
  double min_adjacency = 0.0;
  bool gates_open = true;           // gamma, z, r strictly inside (0, 1)
  bool classes_partition = true;    // M_pos / M_neg disjoint and exhaustive
  bool diagonal_positive = true;    // P_ii > 0 implies (i, i) strengthened
  bool beta_positive = true;
  std::int64_t steps = 0;
};

InvariantReport structural_invariants(const metadg::ForwardResult& result);

/// Trace of a randomized model on a random batch, for invariant sweeps.
metadg::ForwardResult random_traced_forward(std::uint64_t seed, double param_scale = 1.0);

}  // namespace support
