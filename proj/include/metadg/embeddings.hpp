#pragma once

#include <span>
#include <vector>

#include "metadg/config.hpp"
#include "metadg/data.hpp"
#include "metadg/params.hpp"

namespace metadg {

enum class Side { encoder, decoder };
inline const char* side_name(Side s) { return s == Side::encoder ? "enc" : "dec"; }

/// Learnable tables shared by encoder and decoder: the static node embedding,
/// time-of-day / day-of-week pools and the continuous-time frequencies.
struct EmbeddingTable {
  Tensor node_static;  // [N, d_s]
  Tensor tod_pool;     // [288, d_tod]
  Tensor dow_pool;     // [7, d_dow]
  Tensor ctime_omega;  // [d_c], angular frequency per step

  /// [d_tod + d_dow] for one timestamp.
  Tensor time_embedding(int tod, int dow) const;
  /// [times.size(), d_t]
  Tensor time_embedding(std::span<const TimeFeatures> times) const;

  /// One [B, 2 d_t] tensor per step: [anchor || current]. The encoder anchor
  /// is the first input step, the decoder anchor the last input step.
  std::vector<Tensor> enhance_time(const TrafficWindowBatch& batch, Side side) const;

  /// [2 d_c] encoding at window-local time `tau`.
  Tensor continuous_time(double tau) const;
};

EmbeddingTable make_embedding_table(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

/// Initial angular frequencies: 2 pi f with f geometric over [1/2016, 1/2].
std::vector<double> initial_frequencies(std::int64_t d_c);

}  // namespace metadg
