#pragma once

#include <cstdint>
#include <string>

#include "metadg/config.hpp"
#include "metadg/params.hpp"

namespace metadg {

/// Cross-attention of the current node representation over the previous
/// step's, followed by a two-layer MLP with a residual on the query input.
struct SceParams {
  Linear fc_q, fc_k, fc_v;  // d_s -> d'
  Linear mlp0;              // d' -> d_s
  Linear mlp1;              // d_s -> d_s, zero-initialized
};

/// Update-gate driven smoothing.
struct TceParams {
  Linear fc_z;  // d_H -> d_s
};

struct BranchParams {
  SceParams sce;
  TceParams tce;
};

/// Variational dropout masks for one forward pass, already scaled by
/// 1/(1 - rate). Undefined tensors mean no dropout.
struct DropoutMasks {
  Tensor mlp0;  // [B, N, d']
  Tensor mlp1;  // [B, N, d_s]
};

DropoutMasks sample_dropout_masks(std::int64_t batch, std::int64_t nodes, std::int64_t d_attn,
                                  std::int64_t d_s, double rate, Rng& rng);

/// N_cur + MLP(softmax(Q K^T / sqrt(d')) V), Q from n_cur, K/V from n_prev.
Tensor sce(const Tensor& n_cur, const Tensor& n_prev, const SceParams& params,
           const DropoutMasks* masks = nullptr, Tensor* attention = nullptr);

/// zh * n_prev_enh + (1 - zh) * n_sce with zh = sigmoid(FC_z(z_prev)).
Tensor tce(const Tensor& n_sce, const Tensor& n_prev_enh, const Tensor& z_prev,
           const TceParams& params);

/// Per-branch recurrence carried across the steps of one encoder or decoder.
struct BranchState {
  Tensor prev_raw;       // N_{t-1}
  Tensor prev_enhanced;  // N*_{t-1}
  DropoutMasks masks;
};

/// Both previous representations start at the static embedding, broadcast
/// to the batch.
BranchState init_branch_state(const Tensor& n_static, std::int64_t batch,
                              DropoutMasks masks = {});

/// One enhancement step (t is 1-based). t = 1 applies SCE only; later steps
/// compose SCE then TCE, or TCE then SCE with `tsce_order`. Disabled
/// components are skipped. Updates `state`.
Tensor stce_step(const BranchParams& params, const AblationFlags& flags, std::int64_t t,
                 const Tensor& n_t, const Tensor& z_prev, BranchState& state,
                 Tensor* attention = nullptr);

BranchParams make_branch_params(ParameterStore& store, const std::string& prefix,
                                const ModelConfig& cfg, Rng& rng);

}  // namespace metadg
