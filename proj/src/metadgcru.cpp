#include "metadg/metadgcru.hpp"

#include <cmath>

#include "metadg/ops.hpp"

namespace metadg {

Tensor meta_params(const Tensor& np, const Tensor& theta_pool) {
  const std::int64_t d = theta_pool.dim(0), in = theta_pool.dim(1), out = theta_pool.dim(2);
  if (np.rank() != 3 || np.dim(2) != d) {
    throw ShapeError("meta_params: embedding " + shape_str(np.shape()) + " vs pool " +
                     shape_str(theta_pool.shape()));
  }
  const Tensor flat = matmul(np, reshape(theta_pool, {d, in * out}));
  return reshape(flat, {np.dim(0), np.dim(1), in, out});
}

Tensor meta_bias(const Tensor& np, const Tensor& bias_pool) { return matmul(np, bias_pool); }

Tensor graph_supports(const Tensor& z, const Tensor& a_tilde, bool single_support) {
  if (single_support) return z;
  if (a_tilde.rank() != 3 || a_tilde.dim(0) != z.dim(0) || a_tilde.dim(1) != z.dim(1) ||
      a_tilde.dim(2) != z.dim(1)) {
    throw ShapeError("graph_conv: features " + shape_str(z.shape()) + " vs adjacency " +
                     shape_str(a_tilde.shape()));
  }
  return concat_last(z, bmm(a_tilde, z));
}

Tensor graph_conv(const Tensor& z, const Tensor& a_tilde, const Tensor& theta, const Tensor& bias,
                  bool single_support) {
  const Tensor s = graph_supports(z, a_tilde, single_support);
  const std::int64_t b = z.dim(0), n = z.dim(1), in = s.dim(2);
  if (theta.rank() != 4 || theta.dim(0) != b || theta.dim(1) != n || theta.dim(2) != in) {
    throw ShapeError("graph_conv: supports " + shape_str(s.shape()) + " vs parameters " +
                     shape_str(theta.shape()));
  }
  const std::int64_t out = theta.dim(3);
  const Tensor y = bmm(reshape(s, {b * n, 1, in}), reshape(theta, {b * n, in, out}));
  return reshape(y, {b, n, out}) + bias;
}

Tensor meta_graph_conv(const Tensor& z, const Tensor& a_tilde, const Tensor& np,
                       const GatePool& pool, bool single_support) {
  const Tensor s = graph_supports(z, a_tilde, single_support);
  const std::int64_t b = z.dim(0), n = z.dim(1), in = s.dim(2);
  const std::int64_t d = pool.theta.dim(0), out = pool.theta.dim(2);
  if (pool.theta.dim(1) != in || np.dim(2) != d) {
    throw ShapeError("meta_graph_conv: supports " + shape_str(s.shape()) + ", embedding " +
                     shape_str(np.shape()) + ", pool " + shape_str(pool.theta.shape()));
  }
  // U[r, k, o] = sum_i S[r, i] Theta[k, i, o]; out[r, o] = sum_k Np[r, k] U[r, k, o]
  const Tensor theta_p = reshape(permute(pool.theta, {1, 0, 2}), {in, d * out});
  const Tensor u = reshape(matmul(reshape(s, {b * n, in}), theta_p), {b * n, d, out});
  const Tensor y = bmm(reshape(np, {b * n, 1, d}), u);
  return reshape(y, {b, n, out}) + meta_bias(np, pool.bias);
}

Tensor high_rank_embedding(const Tensor& ng, const Tensor& tc, const Linear& fc_hc) {
  const std::int64_t b = ng.dim(0), n = ng.dim(1), d = ng.dim(2), dc2 = tc.dim(0);
  if (fc_hc.weight.dim(1) != d * dc2) {
    throw ShapeError("high_rank_embedding: fc_hc " + shape_str(fc_hc.weight.shape()) +
                     " vs d_s " + std::to_string(d) + " and time code " + shape_str(tc.shape()));
  }
  const Tensor h = reshape(fc_hc(ng), {b * n * d, dc2});
  return reshape(matmul(h, reshape(tc, {dc2, 1})), {b, n, d});
}

GraphArtifacts dynamic_adjacency(const Tensor& ng, const Tensor& tc, const Linear& fc_hc,
                                 const Tensor& phi) {
  GraphArtifacts g;
  g.a_raw = relu(bmm(ng, ng, false, true));
  const Tensor nh = high_rank_embedding(ng, tc, fc_hc);
  g.a_highrank = relu(bmm(nh, nh, false, true));
  g.a = g.a_highrank * g.a_raw;
  g.phi = phi;
  g.a_tilde = row_normalize(phi * g.a, ZeroRow::self_loop);
  return g;
}

CellOptions cell_options(const ModelConfig& cfg) {
  CellOptions o;
  o.flags = cfg.ablation;
  o.adjust.delta = cfg.delta;
  o.adjust.weaken_mode = cfg.weaken_mode;
  o.adjust.weaken_factor = cfg.weaken_factor;
  o.activation = cfg.candidate_activation;
  o.single_support = cfg.single_support;
  return o;
}

CellParams make_cell_params(ParameterStore& store, Side side, const ModelConfig& cfg, Rng& rng) {
  const std::string s = side_name(side);
  CellParams c;
  c.dng = make_dynamic_node_generator(store, "dng." + s, cfg, rng);
  if (cfg.ablation.joined_embedding) {
    c.branches.push_back(make_branch_params(store, "stce.joined." + s, cfg, rng));
  } else {
    for (const char* br : {"p", "g", "m"}) {
      c.branches.push_back(make_branch_params(store, std::string("stce.") + br + "." + s, cfg, rng));
    }
  }
  c.eps_pool = make_threshold_pool(store, "dgq." + s, cfg, rng);
  c.fc_hc = make_linear(store, "adj." + s + ".fc_hc", cfg.d_s, cfg.d_s * 2 * cfg.d_c, rng);

  const std::int64_t width = cfg.input_dim + cfg.d_hidden;
  const std::int64_t in = cfg.single_support ? width : 2 * width;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto gate = [&](const char* g) {
    GatePool p;
    p.theta = store.add("cell." + s + ".theta_" + g,
                        uniform_tensor({cfg.d_s, in, cfg.d_hidden}, bound, rng));
    p.bias = store.add("cell." + s + ".bias_" + g, Tensor::zeros({cfg.d_s, cfg.d_hidden}));
    return p;
  };
  c.gate_z = gate("z");
  c.gate_r = gate("r");
  c.gate_c = gate("c");
  return c;
}

CellState init_cell_state(const CellParams& params, const Tensor& n_static, std::int64_t batch,
                          std::int64_t d_hidden, const std::vector<DropoutMasks>& masks,
                          Tensor h, Tensor z_gate) {
  CellState st;
  const std::int64_t n = n_static.dim(0);
  st.h = h.defined() ? h : Tensor::zeros({batch, n, d_hidden});
  st.z_gate = z_gate.defined() ? z_gate : Tensor::zeros({batch, n, d_hidden});
  for (std::size_t i = 0; i < params.branches.size(); ++i) {
    st.branches.push_back(init_branch_state(n_static, batch, i < masks.size() ? masks[i] : DropoutMasks{}));
  }
  st.t = 0;
  return st;
}

Tensor cell_step(const CellParams& params, const CellOptions& opt, const EmbeddingTable& emb,
                 const Tensor& x_t, const Tensor& t_hat, double tau, CellState& state,
                 StepTrace* trace) {
  const std::int64_t t = ++state.t;
  Tensor gamma;
  const Tensor n_raw = params.dng(t_hat, state.h, emb.node_static, &gamma);

  // The m branch's previous enhanced embedding feeds edge qualification.
  const std::size_t m_index = params.branches.size() == 1 ? std::size_t{0} : std::size_t{kBranchM};
  const Tensor nm_prev = state.branches[m_index].prev_enhanced;

  std::vector<Tensor> enhanced, attention(params.branches.size());
  for (std::size_t i = 0; i < params.branches.size(); ++i) {
    enhanced.push_back(stce_step(params.branches[i], opt.flags, t, n_raw, state.z_gate,
                                 state.branches[i], trace ? &attention[i] : nullptr));
  }
  const Tensor& np = enhanced.size() == 1 ? enhanced[0] : enhanced[kBranchP];
  const Tensor& ng = enhanced.size() == 1 ? enhanced[0] : enhanced[kBranchG];
  const Tensor& nm = enhanced.size() == 1 ? enhanced[0] : enhanced[kBranchM];

  const std::int64_t b = n_raw.dim(0), n = n_raw.dim(1);
  Tensor p, phi;
  WeightAdjustment adj;
  if (opt.flags.use_dgq) {
    p = edge_qualification(nm, nm_prev, static_mask(emb.node_static));
    adj = adjust_weights(p, nm, params.eps_pool, opt.adjust);
    phi = opt.unit_phi ? Tensor::full({b, n, n}, 1.0) : adj.phi;
  } else {
    phi = Tensor::full({b, n, n}, 1.0);
  }
  GraphArtifacts graph = dynamic_adjacency(ng, emb.continuous_time(tau), params.fc_hc, phi);

  const Tensor& h = state.h;
  const Tensor xh = concat_last(x_t, h);
  const Tensor z = sigmoid(meta_graph_conv(xh, graph.a_tilde, np, params.gate_z, opt.single_support));
  const Tensor r = sigmoid(meta_graph_conv(xh, graph.a_tilde, np, params.gate_r, opt.single_support));
  const Tensor pre_c =
      meta_graph_conv(concat_last(x_t, r * h), graph.a_tilde, np, params.gate_c, opt.single_support);
  const Tensor c = opt.activation == CandidateActivation::tanh ? tanh(pre_c) : sigmoid(pre_c);
  const Tensor h_new = z * h + one_minus(z) * c;

  if (trace) {
    trace->gamma = gamma;
    trace->n_raw = n_raw;
    trace->np = np;
    trace->ng = ng;
    trace->nm = nm;
    trace->p = p;
    trace->m_pos = adj.m_pos;
    trace->m_neg = adj.m_neg;
    trace->beta = adj.beta;
    trace->phi = phi;
    trace->graph = graph;
    trace->z = z;
    trace->r = r;
    trace->c = c;
    trace->attention = attention;
    trace->masks.clear();
    for (const auto& br : state.branches) trace->masks.push_back(br.masks);
  }
  state.h = h_new;
  state.z_gate = z;
  return h_new;
}

}  // namespace metadg
