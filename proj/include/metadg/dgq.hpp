#pragma once

#include <string>

#include "metadg/config.hpp"
#include "metadg/params.hpp"

namespace metadg {

/// m_ij = 1 iff <N_i, N_j> > 0. Returned without gradient.
Tensor static_mask(const Tensor& n_static);

/// P_t = asym(ReLU(M * (Nm_cur Nm_prev^T))); all-zero rows stay zero.
Tensor edge_qualification(const Tensor& nm_cur, const Tensor& nm_prev, const Tensor& mask);

struct WeightAdjustment {
  Tensor eps;    // [B, N] node-wise thresholds
  Tensor m_pos;  // [B, N, N]
  Tensor m_neg;  // [B, N, N], constant
  Tensor beta;   // [B, N, N]
  Tensor phi;    // [B, N, N]
};

struct AdjustOptions {
  double delta = 2.0;
  WeakenMode weaken_mode = WeakenMode::adaptive;
  double weaken_factor = 0.5;
  double norm_eps = 1e-5;
};

/// Threshold eps_i = P_ii * sigmoid(<Nm_i, eps_pool>); entries with
/// P_ij - eps_i >= 0 are strengthened, the rest weakened:
///   M_pos = sigmoid(P - eps) on the positive class, else 0
///   M_neg = 1 on the negative class, else 0
///   beta  = exp(delta * InstanceNorm(M_pos))
///   phi   = beta * M_pos + beta * M_neg   (adaptive)
///         = beta * M_pos + c * M_neg      (fixed, c = weaken_factor)
WeightAdjustment adjust_weights(const Tensor& p, const Tensor& nm_cur, const Tensor& eps_pool,
                                const AdjustOptions& options = {});

Tensor make_threshold_pool(ParameterStore& store, const std::string& prefix,
                           const ModelConfig& cfg, Rng& rng);

}  // namespace metadg
