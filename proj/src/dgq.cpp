#include "metadg/dgq.hpp"

#include <cmath>

#include "metadg/ops.hpp"

namespace metadg {

Tensor static_mask(const Tensor& n_static) {
  NoGradGuard no_grad;
  Tensor gram = bmm(n_static, n_static, false, true);
  Tensor mask = Tensor::zeros(gram.shape());
  auto src = gram.data();
  auto dst = mask.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] > 0.0 ? 1.0 : 0.0;
  return mask;
}

Tensor edge_qualification(const Tensor& nm_cur, const Tensor& nm_prev, const Tensor& mask) {
  if (nm_cur.shape() != nm_prev.shape()) {
    throw ShapeError("edge_qualification: " + shape_str(nm_cur.shape()) + " vs " +
                     shape_str(nm_prev.shape()));
  }
  return row_normalize(relu(mask * bmm(nm_cur, nm_prev, false, true)), ZeroRow::keep_zero);
}

WeightAdjustment adjust_weights(const Tensor& p, const Tensor& nm_cur, const Tensor& eps_pool,
                                const AdjustOptions& opt) {
  const std::int64_t b = p.dim(0), n = p.dim(1);
  WeightAdjustment w;
  const Tensor score = reshape(matmul(nm_cur, eps_pool), {b, n});
  w.eps = diagonal(p) * sigmoid(score);
  const Tensor diff = p - reshape(w.eps, {b, n, 1});

  Tensor pos_mask = Tensor::zeros(p.shape());
  w.m_neg = Tensor::zeros(p.shape());
  {
    auto d = diff.data();
    auto pm = pos_mask.data();
    auto nm = w.m_neg.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool positive = d[i] >= 0.0;
      pm[i] = positive ? 1.0 : 0.0;
      nm[i] = positive ? 0.0 : 1.0;
    }
  }
  w.m_pos = sigmoid(diff) * pos_mask;
  w.beta = exp(scale(instance_norm(w.m_pos, opt.norm_eps), opt.delta));
  if (opt.weaken_mode == WeakenMode::adaptive) {
    w.phi = w.beta * w.m_pos + w.beta * w.m_neg;
  } else {
    w.phi = w.beta * w.m_pos + scale(w.m_neg, opt.weaken_factor);
  }
  return w;
}

Tensor make_threshold_pool(ParameterStore& store, const std::string& prefix,
                           const ModelConfig& cfg, Rng& rng) {
  return store.add(prefix + ".eps_pool",
                   uniform_tensor({cfg.d_s, 1}, 1.0 / std::sqrt(double(cfg.d_s)), rng));
}

}  // namespace metadg
