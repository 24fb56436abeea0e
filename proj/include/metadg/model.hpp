#pragma once

#include <vector>

#include "metadg/config.hpp"
#include "metadg/data.hpp"
#include "metadg/embeddings.hpp"
#include "metadg/metadgcru.hpp"
#include "metadg/params.hpp"

namespace metadg {

struct ForwardOptions {
  /// Source of the per-window variational dropout masks; null disables dropout.
  Rng* dropout_rng = nullptr;
  bool teacher_forcing = false;
  bool trace = false;
  bool unit_phi = false;
};

struct ForwardResult {
  Tensor prediction;             // [B, T', N] raw scale
  Tensor prediction_normalized;  // [B, T', N]
  std::vector<StepTrace> encoder, decoder;  // filled when tracing
};

/// Encoder-decoder Meta-DGCRU with a linear output head.
class MetaDG {
 public:
  /// Parameters are drawn from derive_seed(cfg.seed, kInitStream).
  explicit MetaDG(const ModelConfig& cfg);
  MetaDG(const MetaDG&) = delete;
  MetaDG& operator=(const MetaDG&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const EmbeddingTable& embeddings() const { return emb_; }
  const CellParams& cell(Side side) const { return side == Side::encoder ? enc_ : dec_; }
  const Linear& head() const { return head_; }

  const Normalizer& normalizer() const { return norm_; }
  void set_normalizer(const Normalizer& n) { norm_ = n; }

  ForwardResult forward(const TrafficWindowBatch& batch, const ForwardOptions& options = {}) const;

  static constexpr std::uint64_t kInitStream = 1;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  EmbeddingTable emb_;
  CellParams enc_, dec_;
  Linear head_;
  Normalizer norm_;
};

}  // namespace metadg
