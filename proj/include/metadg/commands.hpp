#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metadg/config.hpp"
#include "metadg/data.hpp"

namespace metadg {

/// `dataset = synthetic` builds make_synthetic(num_nodes, synthetic_steps)
/// from the seed; anything else goes through load_dataset under the data
/// root. Throws when the series and config disagree on the node count.
RawSeries load_series(const ModelConfig& cfg, const std::filesystem::path& data_root);

/// Sets the OpenMP thread count when cfg.threads > 0.
void apply_threads(const ModelConfig& cfg);

int run_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
              std::ostream& out);

int run_evaluate(const std::filesystem::path& checkpoint, const std::string& split,
                 const std::filesystem::path& output, std::ostream& out);

/// The window file holds T rows (or T + T', extra rows ignored) of raw flow,
/// [rows x N]. `start_step` is the global index of the first row.
int run_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& window,
                std::int64_t start_step, const std::filesystem::path& output, std::ostream& out);

/// Grid file: `key = v1, v2, ...` lines form a Cartesian product; optional
/// `config = <path>` names the base config and `set = k=v` lines add fixed
/// overrides. A `d_t` axis is split into d_tod/d_dow in the base ratio.
struct SweepGrid {
  std::filesystem::path base_config;
  std::vector<std::string> fixed;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

SweepGrid parse_sweep_grid(const std::string& text);
/// One override list per grid point, axes varying slowest-first.
std::vector<std::vector<std::string>> expand_grid(const SweepGrid& grid, const ModelConfig& base);

int run_sweep(const std::filesystem::path& grid_path, const std::vector<std::string>& overrides,
              std::ostream& out);

/// Writes P_t, phi_t and the final adjacency of every encoder and decoder
/// step of one window as dense CSV matrices (batch element 0).
int run_dump_graph(const std::filesystem::path& checkpoint, std::int64_t window_index,
                   const std::string& split, const std::filesystem::path& output, std::ostream& out);

}  // namespace metadg
