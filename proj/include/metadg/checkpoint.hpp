#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "metadg/model.hpp"

namespace metadg {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint directory layout:
///   manifest.txt    `name dtype dims file` per tensor (dims comma-separated)
///   <name>.f32      raw little-endian float32 values, row-major
///   config.txt      canonical config (runtime keys omitted)
///   config_hash     hash of config.txt
///   normalizer.txt  `mean = ...` / `std = ...`
/// The directory is written under a temporary name and renamed into place.
void save_checkpoint(const MetaDG& model, const std::filesystem::path& dir);

/// Rebuilds the model from config.txt and loads every tensor. Throws
/// CheckpointError on a missing directory, hash mismatch or tensor mismatch.
std::unique_ptr<MetaDG> load_checkpoint(const std::filesystem::path& dir);

/// Config stored in a checkpoint, hash-checked.
ModelConfig checkpoint_config(const std::filesystem::path& dir);

/// Overwrites parameter values with their float32 rounding (the precision
/// checkpoints store).
void round_parameters_to_f32(ParameterStore& store);

std::string source_revision();

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool improved = false;
};

struct RunManifest {
  std::string config_hash;
  std::string dataset_id;
  std::string source_revision;
  std::vector<EpochRecord> epochs;
  std::string best_checkpoint;
  std::int64_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Text `key = value` lines plus one `epoch = e,train,val,improved` line per
/// epoch; replaced atomically.
void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);

/// Writes `text` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::string format_double(double v);

}  // namespace metadg
