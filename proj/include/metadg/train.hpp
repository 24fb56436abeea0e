#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metadg/checkpoint.hpp"
#include "metadg/data.hpp"
#include "metadg/metrics.hpp"
#include "metadg/model.hpp"

namespace metadg {

/// Raised when the loss becomes non-finite; names the first offending tensor.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam; weight decay is plain L2 added to the gradient.
class Adam {
 public:
  Adam(ParameterStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double weight_decay = 0.0);
  void step();
  std::int64_t steps() const { return t_; }

 private:
  ParameterStore& store_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

/// Stops after `patience` consecutive epochs without a strict improvement.
struct EarlyStopping {
  std::int64_t patience = 20;
  double best = 0.0;
  std::int64_t best_epoch = 0;
  std::int64_t since_improvement = 0;
  bool has_best = false;

  /// Returns true when `val_loss` is a new best.
  bool update(std::int64_t epoch, double val_loss);
  bool should_stop() const { return since_improvement >= patience; }
};

/// Name of the first non-finite tensor among parameters, their gradients and
/// the extra named tensors, or empty.
std::string first_non_finite(const ParameterStore& store,
                             const std::vector<std::pair<std::string, Tensor>>& extra = {});

/// Huber loss on raw scale for one batch (graph kept for backward).
Tensor batch_loss(const MetaDG& model, const TrafficWindowBatch& batch, Rng* dropout_rng);

/// One pass over `starts` (already in visiting order); returns the
/// window-weighted mean training loss.
double train_epoch(MetaDG& model, Adam& opt, const RawSeries& series,
                   std::span<const std::int64_t> starts, Rng& dropout_rng);

/// Raw-scale metrics of the model on the given windows, no dropout.
MetricReport evaluate_windows(const MetaDG& model, const RawSeries& series,
                              std::span<const std::int64_t> starts);

/// Validation criterion: masked MAE, evaluated on float32-rounded parameters
/// so the value matches what a saved checkpoint reproduces.
double validation_loss(MetaDG& model, const RawSeries& series,
                       std::span<const std::int64_t> starts);

struct TrainOptions {
  /// Directory for metrics.csv, results.csv, manifest.txt and checkpoints/;
  /// empty disables all file output.
  std::filesystem::path output_dir;
  std::string dataset_id;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double best_val_loss = 0.0;
  std::int64_t best_epoch = 0;
  MetricReport test;  // best-validation parameters on the test split
  std::filesystem::path best_checkpoint;
};

/// Full loop: seeded shuffle per epoch, Adam + clipping, validation, early
/// stopping, checkpoint on improvement, final test evaluation of the best
/// parameters.
TrainResult train_model(MetaDG& model, const RawSeries& series, const DataSplits& splits,
                        const TrainOptions& options = {});

/// Stream tags for derive_seed.
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kDropoutStream = 3;

}  // namespace metadg
