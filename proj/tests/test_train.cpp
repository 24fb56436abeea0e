#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "metadg/checkpoint.hpp"
#include "metadg/ops.hpp"
#include "metadg/train.hpp"
#include "support.hpp"

using namespace metadg;
using support::values;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metadg_train_" + name);
  fs::remove_all(p);
  return p;
}

double grad_norm(const Tensor& t) {
  if (!t.has_grad()) return 0.0;
  double s = 0.0;
  for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

ModelConfig small_run() {
  ModelConfig c = support::tiny_config(4, 2);
  c.synthetic_steps = 200;
  c.max_epochs = 3;
  c.patience = 3;
  c.batch_size = 4;
  c.threads = 1;
  return c;
}

RawSeries series_for(const ModelConfig& c) {
  return make_synthetic(c.num_nodes, c.synthetic_steps, derive_seed(static_cast<std::uint64_t>(c.seed), 4));
}

}  // namespace

TEST_CASE("huber loss") {
  const auto h = [](double p, double t) {
    return huber_loss(Tensor::from({1}, {p}), Tensor::from({1}, {t}), 1.0).item();
  };
  CHECK(h(1.5, 1.0) == 0.125);
  CHECK(h(3.0, 1.0) == 1.5);
  CHECK(h(7.0, 7.0) == 0.0);
  const Tensor p = Tensor::from({1, 2, 2}, {0.5, 2.0, 0.0, -3.0});
  CHECK(huber_loss(p, Tensor::zeros({1, 2, 2}), 1.0).item() == doctest::Approx((0.125 + 1.5 + 0 + 2.5) / 4));
  CHECK(huber_loss(p, Tensor::zeros({1, 2, 2}), 4.0).item() == doctest::Approx((0.125 + 2 + 0 + 4.5) / 4));
}

TEST_CASE("early stopping counter") {
  EarlyStopping es{1};
  CHECK(es.update(1, 5.0));
  CHECK_FALSE(es.should_stop());
  CHECK_FALSE(es.update(2, 5.0));  // ties are not improvements
  CHECK(es.should_stop());
  CHECK(es.best_epoch == 1);

  EarlyStopping e3{3};
  const double losses[] = {4, 3, 3.5, 2, 2.5, 2.2, 2.1, 9};
  std::int64_t stopped = 0;
  double best_so_far = INFINITY;
  for (std::int64_t i = 0; i < 8; ++i) {
    const bool improved = e3.update(i + 1, losses[i]);
    CHECK(improved == (losses[i] < best_so_far));
    best_so_far = std::min(best_so_far, losses[i]);
    CHECK(e3.best == best_so_far);
    if (e3.should_stop()) {
      stopped = i + 1;
      break;
    }
  }
  CHECK(stopped == 7);
  CHECK(e3.best_epoch == 4);
}

TEST_CASE("adam and clipping") {
  ParameterStore store;
  Tensor w = store.add("w", Tensor::from({2}, {3.0, -2.0}));
  Adam opt(store, 0.1);
  for (int i = 0; i < 300; ++i) {
    store.zero_grad();
    sum(w * w).backward();
    opt.step();
  }
  CHECK(opt.steps() == 300);
  CHECK(std::abs(w.data()[0]) < 0.05);
  CHECK(std::abs(w.data()[1]) < 0.05);

  store.zero_grad();
  Tensor v = Tensor::from({2}, {3.0, 4.0});
  sum(w * v).backward();  // grad = (3, 4)
  CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(store, 10.0) == doctest::Approx(1.0));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("one small step lowers the batch loss") {
  int successes = 0;
  for (std::int64_t seed = 0; seed < 10; ++seed) {
    ModelConfig cfg = support::tiny_config(4, 3);
    cfg.seed = seed;
    MetaDG model(cfg);
    Normalizer norm;
    const TrafficWindowBatch batch = support::tiny_batch(cfg, 4, static_cast<std::uint64_t>(seed) + 50, &norm);
    model.set_normalizer(norm);
    Adam opt(model.parameters(), 1e-4);
    model.parameters().zero_grad();
    Tensor loss = batch_loss(model, batch, nullptr);
    const double before = loss.item();
    loss.backward();
    clip_grad_norm(model.parameters(), cfg.grad_clip);
    opt.step();
    NoGradGuard ng;
    const double after = batch_loss(model, batch, nullptr).item();
    if (after < before) ++successes;
  }
  CHECK(successes >= 9);
}

TEST_CASE("every parameter receives gradient once training has started") {
  ModelConfig cfg = support::tiny_config(4, 3);
  MetaDG model(cfg);
  Normalizer norm;
  const TrafficWindowBatch batch = support::tiny_batch(cfg, 2, 3, &norm);
  model.set_normalizer(norm);
  Adam opt(model.parameters(), 1e-3);
  for (int step = 0; step < 2; ++step) {
    model.parameters().zero_grad();
    batch_loss(model, batch, nullptr).backward();
    if (step == 0) {
      for (const char* pool : {"node_static", "tod_pool", "dow_pool", "ctime_omega", "dng.enc.gamma_pool",
                               "dng.dec.gamma_pool", "cell.enc.theta_z", "cell.dec.bias_c", "dgq.enc.eps_pool",
                               "dgq.dec.eps_pool", "adj.enc.fc_hc.weight"}) {
        CAPTURE(pool);
        CHECK(grad_norm(model.parameters().get(pool)) > 0.0);
      }
      opt.step();
    }
  }
  for (const auto& [name, t] : model.parameters().items()) {
    CAPTURE(name);
    CHECK(grad_norm(t) > 0.0);
  }
}

TEST_CASE("non-finite parameters abort with the tensor's name") {
  ModelConfig cfg = small_run();
  MetaDG model(cfg);
  const RawSeries s = series_for(cfg);
  const DataSplits d = split_and_window(s, cfg);
  model.set_normalizer(d.normalizer);
  model.parameters().get("cell.enc.theta_r").data()[3] = NAN;
  CHECK(first_non_finite(model.parameters()) == "cell.enc.theta_r");
  Adam opt(model.parameters(), 1e-3);
  Rng rng(1);
  try {
    train_epoch(model, opt, s, d.train.window_starts, rng);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("cell.enc.theta_r") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip reproduces the validation loss") {
  ModelConfig cfg = small_run();
  MetaDG model(cfg);
  const RawSeries s = series_for(cfg);
  const DataSplits d = split_and_window(s, cfg);
  model.set_normalizer(d.normalizer);
  Rng rng(2);
  support::randomize(model.parameters(), rng, 0.3);
  const double before = validation_loss(model, s, d.val.window_starts);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(model, dir);
  save_checkpoint(model, dir);  // overwrite in place
  CHECK_FALSE(fs::exists(dir.string() + ".partial"));
  CHECK_FALSE(fs::exists(dir.string() + ".old"));
  auto loaded = load_checkpoint(dir);
  CHECK(config_hash(loaded->config()) == config_hash(model.config()));  // runtime keys are not stored
  CHECK(loaded->normalizer().mean == d.normalizer.mean);
  CHECK(loaded->normalizer().std == d.normalizer.std);
  const double after = validation_loss(*loaded, s, d.val.window_starts);
  CHECK(std::abs(after - before) < 1e-6);

  std::ifstream manifest(dir / "manifest.txt");
  std::string first;
  std::getline(manifest, first);
  CHECK(first.find(" f32 ") != std::string::npos);
  CHECK(fs::file_size(dir / "node_static.f32") == 4 * 3 * sizeof(float));
}

TEST_CASE("checkpoint errors") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt"), CheckpointError);
  ModelConfig cfg = small_run();
  MetaDG model(cfg);
  const fs::path dir = scratch("ckpt_bad");
  save_checkpoint(model, dir);
  {
    std::ofstream(dir / "config_hash") << "0000000000000000\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir), CheckpointError);
  save_checkpoint(model, dir);
  fs::resize_file(dir / "head.weight.f32", 8);
  CHECK_THROWS_AS(load_checkpoint(dir), CheckpointError);
}

TEST_CASE("training writes its artifacts and keeps the best checkpoint") {
  ModelConfig cfg = small_run();
  cfg.max_epochs = 4;
  cfg.patience = 4;
  cfg.learning_rate = 0.01;
  MetaDG model(cfg);
  const RawSeries s = series_for(cfg);
  const DataSplits d = split_and_window(s, cfg);
  model.set_normalizer(d.normalizer);
  TrainOptions opt;
  opt.output_dir = scratch("run");
  opt.dataset_id = "synthetic";
  std::int64_t callbacks = 0;
  opt.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  const TrainResult r = train_model(model, s, d, opt);
  CHECK(callbacks == static_cast<std::int64_t>(r.epochs.size()));
  double best = INFINITY;
  std::int64_t best_epoch = 0;
  for (const auto& e : r.epochs) {
    CHECK(e.improved == (e.val_loss < best));
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.best_val_loss == best);
  CHECK(r.best_epoch == best_epoch);
  CHECK(fs::exists(opt.output_dir / "metrics.csv"));
  CHECK(fs::exists(opt.output_dir / "results.csv"));
  const RunManifest m = read_run_manifest(opt.output_dir / "manifest.txt");
  CHECK(m.config_hash == config_hash(cfg));
  CHECK(m.dataset_id == "synthetic");
  CHECK(m.best_val_loss == r.best_val_loss);
  CHECK(m.epochs.size() == r.epochs.size());
  auto best_model = load_checkpoint(m.best_checkpoint);
  CHECK(std::abs(validation_loss(*best_model, s, d.val.window_starts) - r.best_val_loss) < 1e-6);
  CHECK(r.test.per_horizon.size() == 2);

  std::ifstream csv(opt.output_dir / "results.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "horizon,mae,rmse,mape");
}

TEST_CASE("the same seed trains identically") {
  ModelConfig cfg = small_run();
  cfg.max_epochs = 1;
  cfg.patience = 1;
  cfg.dropout = 0.2;
  std::vector<TrainResult> runs;
  for (int i = 0; i < 2; ++i) {
    MetaDG model(cfg);
    const RawSeries s = series_for(cfg);
    const DataSplits d = split_and_window(s, cfg);
    model.set_normalizer(d.normalizer);
    runs.push_back(train_model(model, s, d));
  }
  CHECK(runs[0].epochs[0].train_loss == runs[1].epochs[0].train_loss);
  CHECK(runs[0].best_val_loss == runs[1].best_val_loss);
}
