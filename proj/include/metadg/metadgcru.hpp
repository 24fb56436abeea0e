#pragma once

#include <array>
#include <string>
#include <vector>

#include "metadg/config.hpp"
#include "metadg/dgq.hpp"
#include "metadg/dng.hpp"
#include "metadg/embeddings.hpp"
#include "metadg/params.hpp"
#include "metadg/stce.hpp"

namespace metadg {

/// Weight pool [d_s, I, O] and bias pool [d_s, O] of one gate.
struct GatePool {
  Tensor theta;
  Tensor bias;
};

/// theta_t = Np Theta: [B, N, d_s] x [d_s, I, O] -> [B, N, I, O].
Tensor meta_params(const Tensor& np, const Tensor& theta_pool);
/// [B, N, d_s] x [d_s, O] -> [B, N, O]
Tensor meta_bias(const Tensor& np, const Tensor& bias_pool);

/// Supports of the one-hop convolution: [Z || A Z] (or Z alone).
Tensor graph_supports(const Tensor& z, const Tensor& a_tilde, bool single_support);

/// Node-wise convolution with explicit parameters:
/// out[b, n] = S[b, n] theta[b, n] + bias[b, n], S = graph_supports(z, a_tilde).
Tensor graph_conv(const Tensor& z, const Tensor& a_tilde, const Tensor& theta, const Tensor& bias,
                  bool single_support = false);

/// Same result as graph_conv(z, a, meta_params(np, pool.theta), meta_bias(np, pool.bias))
/// without materializing the [B, N, I, O] parameters: sum_d Np[d] (S Theta[d]).
Tensor meta_graph_conv(const Tensor& z, const Tensor& a_tilde, const Tensor& np,
                       const GatePool& pool, bool single_support = false);

struct GraphArtifacts {
  Tensor a_raw;       // ReLU(Ng Ng^T)
  Tensor a_highrank;  // ReLU(Nh Nh^T)
  Tensor a;           // a_highrank * a_raw
  Tensor phi;
  Tensor a_tilde;     // asym(phi * a), zero rows -> self loop
};

/// Nh[b, n, :] = FC_h(Ng[b, n]) reshaped [d_s, 2 d_c], contracted with tc.
Tensor high_rank_embedding(const Tensor& ng, const Tensor& tc, const Linear& fc_hc);

GraphArtifacts dynamic_adjacency(const Tensor& ng, const Tensor& tc, const Linear& fc_hc,
                                 const Tensor& phi);

/// Everything one side (encoder or decoder) of the model owns.
struct CellParams {
  DynamicNodeGenerator dng;
  std::vector<BranchParams> branches;  // p, g, m; a single entry when joined
  Tensor eps_pool;                     // [d_s, 1]
  Linear fc_hc;                        // d_s -> d_s * 2 d_c
  GatePool gate_z, gate_r, gate_c;
};

enum Branch : std::size_t { kBranchP = 0, kBranchG = 1, kBranchM = 2 };

struct CellState {
  Tensor h;       // [B, N, d_H]
  Tensor z_gate;  // [B, N, d_H], previous update gate
  std::vector<BranchState> branches;
  std::int64_t t = 0;  // steps taken on this side
};

/// Per-step intermediates kept when tracing.
struct StepTrace {
  Tensor gamma, n_raw, np, ng, nm;
  Tensor p, m_pos, m_neg, beta, phi;
  GraphArtifacts graph;
  Tensor z, r, c;
  std::vector<Tensor> attention;  // per branch, when SCE ran
  std::vector<DropoutMasks> masks;  // per branch, as applied at this step
};

/// Runtime knobs of the cell that are not learned.
struct CellOptions {
  AblationFlags flags;
  AdjustOptions adjust;
  CandidateActivation activation = CandidateActivation::tanh;
  bool single_support = false;
  /// Runs DGQ but feeds phi = 1 to the adjacency (ablation cross-check).
  bool unit_phi = false;
};

CellOptions cell_options(const ModelConfig& cfg);

CellParams make_cell_params(ParameterStore& store, Side side, const ModelConfig& cfg, Rng& rng);

/// Fresh per-side state: branch histories start at the static embedding.
/// `h`/`z_gate` are zeros unless given (the decoder inherits the encoder's).
CellState init_cell_state(const CellParams& params, const Tensor& n_static, std::int64_t batch,
                          std::int64_t d_hidden, const std::vector<DropoutMasks>& masks,
                          Tensor h = {}, Tensor z_gate = {});

/// One recurrent step: DNG -> STCE(p, g, m) -> DGQ -> adjacency ->
/// meta-parameter gated update. Returns H_t and advances `state`.
Tensor cell_step(const CellParams& params, const CellOptions& options, const EmbeddingTable& emb,
                 const Tensor& x_t, const Tensor& t_hat, double tau, CellState& state,
                 StepTrace* trace = nullptr);

}  // namespace metadg
