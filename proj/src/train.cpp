#include "metadg/train.hpp"

#include <cmath>
#include <fstream>

#include "metadg/ops.hpp"

namespace metadg {

namespace fs = std::filesystem;

Adam::Adam(ParameterStore& store, double lr, double beta1, double beta2, double eps,
           double weight_decay)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const auto& [name, t] : store_.items()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& items = store_.items();
  for (std::size_t p = 0; p < items.size(); ++p) {
    Tensor t = items[p].second;
    if (!t.has_grad()) continue;
    auto w = t.data();
    const auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : store.items()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (const auto& [name, t] : store.items()) {
      if (!t.has_grad()) continue;
      Tensor h = t;
      for (double& g : h.mutable_grad()) g *= s;
    }
  }
  return norm;
}

bool EarlyStopping::update(std::int64_t epoch, double val_loss) {
  if (!has_best || val_loss < best) {
    has_best = true;
    best = val_loss;
    best_epoch = epoch;
    since_improvement = 0;
    return true;
  }
  ++since_improvement;
  return false;
}

std::string first_non_finite(const ParameterStore& store,
                             const std::vector<std::pair<std::string, Tensor>>& extra) {
  auto bad = [](std::span<const double> s) {
    for (double v : s) {
      if (!std::isfinite(v)) return true;
    }
    return false;
  };
  for (const auto& [name, t] : store.items()) {
    if (bad(t.data())) return name;
  }
  for (const auto& [name, t] : extra) {
    if (t.defined() && bad(t.data())) return name;
  }
  for (const auto& [name, t] : store.items()) {
    if (t.has_grad() && bad(t.grad())) return name + ".grad";
  }
  return {};
}

Tensor batch_loss(const MetaDG& model, const TrafficWindowBatch& batch, Rng* dropout_rng) {
  ForwardOptions fo;
  fo.dropout_rng = dropout_rng;
  fo.teacher_forcing = model.config().teacher_forcing;
  const ForwardResult r = model.forward(batch, fo);
  return huber_loss(r.prediction, batch.y, model.config().huber_kappa);
}

double train_epoch(MetaDG& model, Adam& opt, const RawSeries& series,
                   std::span<const std::int64_t> starts, Rng& dropout_rng) {
  const ModelConfig& cfg = model.config();
  const auto total = static_cast<std::int64_t>(starts.size());
  double loss_sum = 0.0;
  for (std::int64_t i = 0; i < total; i += cfg.batch_size) {
    const std::int64_t len = std::min(cfg.batch_size, total - i);
    const TrafficWindowBatch batch =
        make_batch(series, model.normalizer(), starts.subspan(static_cast<std::size_t>(i),
                                                              static_cast<std::size_t>(len)),
                   cfg.horizon_in, cfg.horizon_out);
    model.parameters().zero_grad();
    Tensor loss = batch_loss(model, batch, cfg.dropout > 0.0 ? &dropout_rng : nullptr);
    if (!std::isfinite(loss.item())) {
      const std::string culprit = first_non_finite(model.parameters());
      throw DivergenceError("loss became non-finite at window offset " + std::to_string(i) +
                            "; first non-finite tensor: " + (culprit.empty() ? "prediction" : culprit));
    }
    loss.backward();
    const std::string bad_grad = first_non_finite(model.parameters());
    if (!bad_grad.empty()) throw DivergenceError("non-finite tensor after backward: " + bad_grad);
    clip_grad_norm(model.parameters(), cfg.grad_clip);
    opt.step();
    loss_sum += loss.item() * static_cast<double>(len);
  }
  return total ? loss_sum / static_cast<double>(total) : 0.0;
}

MetricReport evaluate_windows(const MetaDG& model, const RawSeries& series,
                              std::span<const std::int64_t> starts) {
  const ModelConfig& cfg = model.config();
  NoGradGuard no_grad;
  MetricAccumulator acc(cfg.horizon_out, cfg.mape_threshold);
  const auto total = static_cast<std::int64_t>(starts.size());
  for (std::int64_t i = 0; i < total; i += cfg.batch_size) {
    const std::int64_t len = std::min(cfg.batch_size, total - i);
    const TrafficWindowBatch batch =
        make_batch(series, model.normalizer(), starts.subspan(static_cast<std::size_t>(i),
                                                              static_cast<std::size_t>(len)),
                   cfg.horizon_in, cfg.horizon_out);
    const ForwardResult r = model.forward(batch);
    acc.add(r.prediction.data(), batch.y.data(), len, cfg.num_nodes);
  }
  return acc.report();
}

double validation_loss(MetaDG& model, const RawSeries& series,
                       std::span<const std::int64_t> starts) {
  std::vector<std::vector<double>> master;
  for (const auto& [name, t] : model.parameters().items()) {
    master.emplace_back(t.data().begin(), t.data().end());
  }
  round_parameters_to_f32(model.parameters());
  const double loss = evaluate_windows(model, series, starts).overall.masked_mae;
  std::size_t p = 0;
  for (const auto& [name, t] : model.parameters().items()) {
    Tensor h = t;
    std::copy(master[p].begin(), master[p].end(), h.data().begin());
    ++p;
  }
  return loss;
}

TrainResult train_model(MetaDG& model, const RawSeries& series, const DataSplits& splits,
                        const TrainOptions& options) {
  const ModelConfig& cfg = model.config();
  if (splits.train.window_starts.empty() || splits.val.window_starts.empty()) {
    throw DatasetError("training needs non-empty train and validation splits");
  }
  if (series.num_nodes != cfg.num_nodes) {
    throw DatasetError("dataset has " + std::to_string(series.num_nodes) +
                       " nodes but the config expects " + std::to_string(cfg.num_nodes));
  }
  model.set_normalizer(splits.normalizer);
  const auto seed = static_cast<std::uint64_t>(cfg.seed);
  Rng shuffle_rng(derive_seed(seed, kShuffleStream));
  Rng dropout_rng(derive_seed(seed, kDropoutStream));
  Adam opt(model.parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
           cfg.weight_decay);
  EarlyStopping stopper{cfg.patience};

  const bool write = !options.output_dir.empty();
  const fs::path out = options.output_dir;
  const fs::path best_dir = out / "checkpoints" / "best";
  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.dataset_id = options.dataset_id.empty() ? cfg.dataset : options.dataset_id;
  manifest.source_revision = source_revision();
  std::ofstream metrics_csv;
  if (write) {
    fs::create_directories(out / "checkpoints");
    save_config(cfg, out / "config.txt");
    metrics_csv.open(out / "metrics.csv");
    metrics_csv << "epoch,train_loss,val_loss\n";
    metrics_csv.precision(17);
  }

  TrainResult result;
  std::vector<std::vector<double>> best_params;
  std::vector<std::int64_t> order = splits.train.window_starts;
  for (std::int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(model, opt, series, order, dropout_rng);
    rec.val_loss = validation_loss(model, series, splits.val.window_starts);
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError("validation loss is non-finite at epoch " + std::to_string(epoch));
    }
    rec.improved = stopper.update(epoch, rec.val_loss);
    if (rec.improved) {
      best_params.clear();
      for (const auto& [name, t] : model.parameters().items()) {
        best_params.emplace_back(t.data().begin(), t.data().end());
      }
      if (write) {
        save_checkpoint(model, best_dir);
        manifest.best_checkpoint = best_dir.string();
      }
    }
    result.epochs.push_back(rec);
    if (write) {
      metrics_csv << rec.epoch << ',' << rec.train_loss << ',' << rec.val_loss << '\n';
      metrics_csv.flush();
      manifest.epochs = result.epochs;
      manifest.best_epoch = stopper.best_epoch;
      manifest.best_val_loss = stopper.best;
      write_run_manifest(manifest, out / "manifest.txt");
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (stopper.should_stop()) break;
  }

  // Restore the best parameters at checkpoint precision and report on test.
  std::size_t p = 0;
  for (const auto& [name, t] : model.parameters().items()) {
    Tensor h = t;
    std::copy(best_params[p].begin(), best_params[p].end(), h.data().begin());
    ++p;
  }
  round_parameters_to_f32(model.parameters());
  result.best_val_loss = stopper.best;
  result.best_epoch = stopper.best_epoch;
  result.best_checkpoint = write ? best_dir : fs::path{};
  if (!splits.test.window_starts.empty()) {
    result.test = evaluate_windows(model, series, splits.test.window_starts);
    if (write) write_metric_csv(out / "results.csv", result.test);
  }
  return result;
}

}  // namespace metadg
