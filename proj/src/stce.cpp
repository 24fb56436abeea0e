#include "metadg/stce.hpp"

#include <cmath>
#include <stdexcept>

#include "metadg/ops.hpp"

namespace metadg {

DropoutMasks sample_dropout_masks(std::int64_t batch, std::int64_t nodes, std::int64_t d_attn,
                                  std::int64_t d_s, double rate, Rng& rng) {
  DropoutMasks m;
  if (rate <= 0.0) return m;
  const double keep = 1.0 / (1.0 - rate);
  auto draw = [&](std::int64_t width) {
    Tensor t = Tensor::zeros({batch, nodes, width});
    for (auto& v : t.data()) v = rng.bernoulli(rate) ? 0.0 : keep;
    return t;
  };
  m.mlp0 = draw(d_attn);
  m.mlp1 = draw(d_s);
  return m;
}

Tensor sce(const Tensor& n_cur, const Tensor& n_prev, const SceParams& p,
           const DropoutMasks* masks, Tensor* attention) {
  if (n_cur.shape() != n_prev.shape() || n_cur.rank() != 3) {
    throw ShapeError("sce: " + shape_str(n_cur.shape()) + " vs " + shape_str(n_prev.shape()));
  }
  const Tensor q = p.fc_q(n_cur);
  const Tensor k = p.fc_k(n_prev);
  const Tensor v = p.fc_v(n_prev);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
  const Tensor alpha = softmax_last(scale(bmm(q, k, false, true), inv_sqrt_d));
  if (attention) *attention = alpha;
  Tensor hidden = bmm(alpha, v);
  if (masks && masks->mlp0.defined()) hidden = hidden * masks->mlp0;
  hidden = relu(p.mlp0(hidden));
  if (masks && masks->mlp1.defined()) hidden = hidden * masks->mlp1;
  return n_cur + p.mlp1(hidden);
}

Tensor tce(const Tensor& n_sce, const Tensor& n_prev_enh, const Tensor& z_prev,
           const TceParams& p) {
  if (n_sce.shape() != n_prev_enh.shape()) {
    throw ShapeError("tce: " + shape_str(n_sce.shape()) + " vs " + shape_str(n_prev_enh.shape()));
  }
  const Tensor zh = sigmoid(p.fc_z(z_prev));
  return zh * n_prev_enh + one_minus(zh) * n_sce;
}

BranchState init_branch_state(const Tensor& n_static, std::int64_t batch, DropoutMasks masks) {
  // Broadcast through the tape so gradients reach the static embedding.
  const Tensor zeros = Tensor::zeros({batch, n_static.dim(0), n_static.dim(1)});
  const Tensor start = zeros + n_static;
  return {start, start, std::move(masks)};
}

Tensor stce_step(const BranchParams& p, const AblationFlags& flags, std::int64_t t,
                 const Tensor& n_t, const Tensor& z_prev, BranchState& state, Tensor* attention) {
  if (t < 1) throw std::logic_error("stce_step: steps are 1-based, got t = " + std::to_string(t));
  const DropoutMasks* masks = &state.masks;
  Tensor out = n_t;
  if (t == 1) {
    if (flags.use_sce) out = sce(n_t, state.prev_raw, p.sce, masks, attention);
  } else if (!flags.tsce_order) {
    if (flags.use_sce) out = sce(out, state.prev_raw, p.sce, masks, attention);
    if (flags.use_tce) out = tce(out, state.prev_enhanced, z_prev, p.tce);
  } else {
    if (flags.use_tce) out = tce(out, state.prev_enhanced, z_prev, p.tce);
    if (flags.use_sce) out = sce(out, state.prev_raw, p.sce, masks, attention);
  }
  state.prev_raw = n_t;
  state.prev_enhanced = out;
  return out;
}

BranchParams make_branch_params(ParameterStore& store, const std::string& prefix,
                                const ModelConfig& cfg, Rng& rng) {
  BranchParams b;
  b.sce.fc_q = make_linear(store, prefix + ".fc_q", cfg.d_s, cfg.d_attn, rng);
  b.sce.fc_k = make_linear(store, prefix + ".fc_k", cfg.d_s, cfg.d_attn, rng);
  b.sce.fc_v = make_linear(store, prefix + ".fc_v", cfg.d_s, cfg.d_attn, rng);
  b.sce.mlp0 = make_linear(store, prefix + ".mlp0", cfg.d_attn, cfg.d_s, rng);
  b.sce.mlp1 = make_linear(store, prefix + ".mlp1", cfg.d_s, cfg.d_s, rng, /*zero_init=*/true);
  b.tce.fc_z = make_linear(store, prefix + ".fc_z", cfg.d_hidden, cfg.d_s, rng);
  return b;
}

}  // namespace metadg
