#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace metadg {

enum class CandidateActivation { tanh, sigmoid };
enum class WeakenMode { adaptive, fixed };

struct AblationFlags {
  bool use_sce = true;
  bool use_tce = true;
  bool use_dgq = true;
  bool tsce_order = false;
  bool joined_embedding = false;

  bool operator==(const AblationFlags&) const = default;
};

/// Every dimension, switch and tolerance of a run. Defaults are the PEMS08
/// setting.
struct ModelConfig {
  std::string dataset = "PEMS08";
  std::int64_t num_nodes = 170;
  std::int64_t horizon_in = 12;
  std::int64_t horizon_out = 12;
  std::int64_t input_dim = 3;  // normalized flow, tod/288, dow/7

  std::int64_t d_s = 12;
  std::int64_t d_tod = 10;
  std::int64_t d_dow = 2;
  std::int64_t d_c = 8;
  std::int64_t d_hidden = 64;
  std::int64_t d_attn = 64;
  double delta = 2.0;
  double dropout = 0.1;

  AblationFlags ablation;
  CandidateActivation candidate_activation = CandidateActivation::tanh;
  WeakenMode weaken_mode = WeakenMode::adaptive;
  double weaken_factor = 0.5;
  bool single_support = false;
  bool teacher_forcing = false;

  std::int64_t batch_size = 16;
  std::int64_t max_epochs = 200;
  std::int64_t patience = 20;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double huber_kappa = 1.0;
  double mape_threshold = 1.0;

  double train_ratio = 0.6;
  double val_ratio = 0.2;
  std::int64_t max_train_windows = 0;  // 0 = all
  std::int64_t max_eval_windows = 0;   // 0 = all

  std::int64_t synthetic_steps = 4032;
  double synthetic_noise = 0.05;
  double synthetic_coupling = 0.2;

  std::int64_t seed = 0;

  // Runtime-only keys: excluded from the config hash.
  std::int64_t threads = 0;  // 0 = OpenMP default
  std::string output_dir = "runs/default";

  std::int64_t d_t() const { return d_tod + d_dow; }

  bool operator==(const ModelConfig&) const = default;
};

/// Aggregated configuration problems; `what()` lists all of them.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Per-dataset defaults (PEMS03, PEMS04, PEMS07, PEMS08). Throws ConfigError
/// for unknown ids.
ModelConfig preset_config(const std::string& dataset_id);

/// Applies `key=value` pairs. The pseudo-key `preset` resets to a preset
/// and is applied before all other keys.
void apply_overrides(ModelConfig& cfg, const std::vector<std::string>& assignments);

/// Parses a flat `key = value` file (`#` comments) and then `overrides`;
/// validates the result.
ModelConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});
ModelConfig parse_config(const std::string& text,
                         const std::vector<std::string>& overrides = {});

/// Collects every invariant violation; empty means valid.
std::vector<std::string> validate(const ModelConfig& cfg);
void validate_or_throw(const ModelConfig& cfg);

/// Canonical text: one `key = value` line per key in sorted order.
std::string serialize(const ModelConfig& cfg, bool include_runtime = true);
void save_config(const ModelConfig& cfg, const std::filesystem::path& path);

/// FNV-1a 64 of the canonical non-runtime serialization, 16 hex digits.
std::string config_hash(const ModelConfig& cfg);

std::vector<std::string> config_keys();
std::string get_config_value(const ModelConfig& cfg, const std::string& key);

}  // namespace metadg
