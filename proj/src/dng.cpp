#include "metadg/dng.hpp"

#include <cmath>

#include "metadg/ops.hpp"

namespace metadg {

Tensor DynamicNodeGenerator::gate(const Tensor& t_hat) const {
  if (t_hat.rank() != 2 || t_hat.dim(1) != gamma_pool.dim(0)) {
    throw ShapeError("dng: time embedding " + shape_str(t_hat.shape()) + " vs pool " +
                     shape_str(gamma_pool.shape()));
  }
  return sigmoid(bmm(t_hat, gamma_pool));
}

Tensor DynamicNodeGenerator::operator()(const Tensor& t_hat, const Tensor& h_prev,
                                        const Tensor& n_static, Tensor* gate_out) const {
  const std::int64_t d_s = gamma_pool.dim(1);
  if (h_prev.rank() != 3 || h_prev.dim(0) != t_hat.dim(0) || n_static.rank() != 2 ||
      n_static.dim(0) != h_prev.dim(1) || n_static.dim(1) != d_s) {
    throw ShapeError("dng: hidden " + shape_str(h_prev.shape()) + ", static " +
                     shape_str(n_static.shape()) + ", time " + shape_str(t_hat.shape()));
  }
  const Tensor g = gate(t_hat);
  if (gate_out) *gate_out = g;
  const Tensor g3 = reshape(g, {g.dim(0), 1, d_s});
  const Tensor h_hat = fc_h(h_prev);
  return g3 * n_static + one_minus(g3) * h_hat;
}

DynamicNodeGenerator make_dynamic_node_generator(ParameterStore& store, const std::string& prefix,
                                                 const ModelConfig& cfg, Rng& rng) {
  const std::int64_t in = 2 * cfg.d_t();
  DynamicNodeGenerator d;
  d.gamma_pool = store.add(prefix + ".gamma_pool",
                           uniform_tensor({in, cfg.d_s}, 1.0 / std::sqrt(double(in)), rng));
  d.fc_h = make_linear(store, prefix + ".fc_h", cfg.d_hidden, cfg.d_s, rng);
  return d;
}

}  // namespace metadg
