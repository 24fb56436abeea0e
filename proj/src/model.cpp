#include "metadg/model.hpp"

#include "metadg/ops.hpp"

namespace metadg {

MetaDG::MetaDG(const ModelConfig& cfg) : cfg_(cfg) {
  validate_or_throw(cfg_);
  Rng rng(derive_seed(static_cast<std::uint64_t>(cfg_.seed), kInitStream));
  emb_ = make_embedding_table(store_, cfg_, rng);
  enc_ = make_cell_params(store_, Side::encoder, cfg_, rng);
  dec_ = make_cell_params(store_, Side::decoder, cfg_, rng);
  head_ = make_linear(store_, "head", cfg_.d_hidden, 1, rng);
}

ForwardResult MetaDG::forward(const TrafficWindowBatch& batch, const ForwardOptions& fo) const {
  if (batch.num_nodes != cfg_.num_nodes) {
    throw ShapeError("batch has " + std::to_string(batch.num_nodes) + " nodes, model has " +
                     std::to_string(cfg_.num_nodes));
  }
  if (batch.horizon_in != cfg_.horizon_in || batch.horizon_out != cfg_.horizon_out) {
    throw ShapeError("batch horizons do not match the model config");
  }
  const std::int64_t b = batch.batch, n = cfg_.num_nodes;
  const std::int64_t t_in = cfg_.horizon_in, t_out = cfg_.horizon_out;
  CellOptions opt = cell_options(cfg_);
  opt.unit_phi = fo.unit_phi;

  auto masks = [&](const CellParams& cell) {
    std::vector<DropoutMasks> m;
    for (std::size_t i = 0; i < cell.branches.size(); ++i) {
      m.push_back(fo.dropout_rng ? sample_dropout_masks(b, n, cfg_.d_attn, cfg_.d_s, cfg_.dropout,
                                                        *fo.dropout_rng)
                                 : DropoutMasks{});
    }
    return m;
  };

  ForwardResult out;
  const std::vector<Tensor> enc_time = emb_.enhance_time(batch, Side::encoder);
  CellState enc = init_cell_state(enc_, emb_.node_static, b, cfg_.d_hidden, masks(enc_));
  for (std::int64_t t = 0; t < t_in; ++t) {
    StepTrace* tr = nullptr;
    if (fo.trace) tr = &out.encoder.emplace_back();
    cell_step(enc_, opt, emb_, select(batch.x, 1, t), enc_time[static_cast<std::size_t>(t)],
              static_cast<double>(t + 1), enc, tr);
  }

  const std::vector<Tensor> dec_time = emb_.enhance_time(batch, Side::decoder);
  CellState dec = init_cell_state(dec_, emb_.node_static, b, cfg_.d_hidden, masks(dec_), enc.h,
                                  enc.z_gate);
  Tensor flow = reshape(select(select(batch.x, 1, t_in - 1), 2, 0), {b, n, 1});
  std::vector<Tensor> preds;
  for (std::int64_t k = 0; k < t_out; ++k) {
    Tensor time = Tensor::zeros({b, n, 2});
    auto td = time.data();
    for (std::int64_t i = 0; i < b; ++i) {
      const TimeFeatures& f = batch.out_time(i, k);
      for (std::int64_t j = 0; j < n; ++j) {
        td[static_cast<std::size_t>((i * n + j) * 2)] =
            static_cast<double>(f.tod) / static_cast<double>(kStepsPerDay);
        td[static_cast<std::size_t>((i * n + j) * 2 + 1)] = static_cast<double>(f.dow) / 7.0;
      }
    }
    StepTrace* tr = nullptr;
    if (fo.trace) tr = &out.decoder.emplace_back();
    const Tensor h = cell_step(dec_, opt, emb_, concat_last(flow, time),
                               dec_time[static_cast<std::size_t>(k)],
                               static_cast<double>(t_in + k + 1), dec, tr);
    const Tensor y = head_(h);  // [B, N, 1]
    preds.push_back(reshape(y, {b, n}));
    if (fo.teacher_forcing) {
      Tensor truth = Tensor::zeros({b, n, 1});
      auto dst = truth.data();
      const auto src = batch.y.data();
      for (std::int64_t i = 0; i < b; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
          dst[static_cast<std::size_t>(i * n + j)] =
              norm_.forward(src[static_cast<std::size_t>((i * t_out + k) * n + j)]);
        }
      }
      flow = truth;
    } else {
      flow = y;
    }
  }
  out.prediction_normalized = stack(preds, 1);
  out.prediction = add_scalar(scale(out.prediction_normalized, norm_.std), norm_.mean);
  return out;
}

}  // namespace metadg
