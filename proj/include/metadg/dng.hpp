#pragma once

#include <string>

#include "metadg/config.hpp"
#include "metadg/params.hpp"

namespace metadg {

/// Time-gated fusion of the static node embedding with the projected
/// previous hidden state:
///   gamma = sigmoid(T_hat Gamma)                  [B, d_s]
///   N_t   = gamma * N + (1 - gamma) * FC_H(H_prev) [B, N, d_s]
/// gamma is shared by all nodes of a batch element.
struct DynamicNodeGenerator {
  Tensor gamma_pool;  // [2 d_t, d_s]
  Linear fc_h;        // d_H -> d_s

  Tensor gate(const Tensor& t_hat) const;
  Tensor operator()(const Tensor& t_hat, const Tensor& h_prev, const Tensor& n_static,
                    Tensor* gate_out = nullptr) const;
};

DynamicNodeGenerator make_dynamic_node_generator(ParameterStore& store, const std::string& prefix,
                                                 const ModelConfig& cfg, Rng& rng);

}  // namespace metadg
