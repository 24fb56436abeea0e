#include "metadg/commands.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "metadg/checkpoint.hpp"
#include "metadg/train.hpp"

namespace metadg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const SplitRange& pick_split(const DataSplits& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw std::invalid_argument("unknown split '" + name + "' (train, val or test)");
}

void write_matrix_csv(const fs::path& path, const Tensor& t) {
  // batch element 0 of [B, N, N]
  const std::int64_t n = t.dim(1);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(10);
  const auto d = t.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      out << (j ? "," : "") << d[static_cast<std::size_t>(i * n + j)];
    }
    out << '\n';
  }
}

void print_summary(std::ostream& out, const MetricReport& r) {
  out << "horizon,mae,rmse,mape\n" << std::setprecision(6);
  for (std::size_t h : {3u, 6u, 12u}) {
    if (h > r.per_horizon.size()) continue;
    const auto& m = r.per_horizon[h - 1];
    out << h << ',' << m.mae << ',' << m.rmse << ',' << m.mape << '\n';
  }
  out << "average," << r.overall.mae << ',' << r.overall.rmse << ',' << r.overall.mape << '\n';
}

}  // namespace

RawSeries load_series(const ModelConfig& cfg, const fs::path& data_root) {
  RawSeries s;
  if (cfg.dataset == "synthetic") {
    SyntheticOptions o;
    o.noise = cfg.synthetic_noise;
    o.coupling = cfg.synthetic_coupling;
    s = make_synthetic(cfg.num_nodes, cfg.synthetic_steps,
                       derive_seed(static_cast<std::uint64_t>(cfg.seed), 4), o);
  } else {
    s = load_dataset(cfg.dataset, data_root);
  }
  if (s.num_nodes != cfg.num_nodes) {
    throw DatasetError("dataset " + cfg.dataset + " has " + std::to_string(s.num_nodes) +
                       " nodes but config num_nodes = " + std::to_string(cfg.num_nodes));
  }
  return s;
}

void apply_threads(const ModelConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(static_cast<int>(cfg.threads));
}

int run_train(const fs::path& config_path, const std::vector<std::string>& overrides,
              std::ostream& out) {
  const ModelConfig cfg = load_config(config_path, overrides);
  apply_threads(cfg);
  const RawSeries series = load_series(cfg, default_data_root());
  const DataSplits splits = split_and_window(series, cfg);
  MetaDG model(cfg);
  out << "config " << config_hash(cfg) << ", " << model.parameters().scalar_count()
      << " parameters, windows train/val/test " << splits.train.window_starts.size() << '/'
      << splits.val.window_starts.size() << '/' << splits.test.window_starts.size() << '\n';
  TrainOptions opt;
  opt.output_dir = cfg.output_dir;
  opt.dataset_id = cfg.dataset;
  opt.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss " << std::setprecision(6) << r.train_loss
        << " val_loss " << r.val_loss << (r.improved ? " *" : "") << '\n';
    out.flush();
  };
  const TrainResult res = train_model(model, series, splits, opt);
  out << "best epoch " << res.best_epoch << " val_loss " << res.best_val_loss << "\n";
  out << "checkpoint " << res.best_checkpoint.string() << "\n";
  print_summary(out, res.test);
  return 0;
}

int run_evaluate(const fs::path& checkpoint, const std::string& split, const fs::path& output,
                 std::ostream& out) {
  auto model = load_checkpoint(checkpoint);
  const ModelConfig& cfg = model->config();
  const RawSeries series = load_series(cfg, default_data_root());
  const DataSplits splits = split_and_window(series, cfg);
  const MetricReport r = evaluate_windows(*model, series, pick_split(splits, split).window_starts);
  const fs::path path = output.empty() ? checkpoint / ("evaluation_" + split + ".csv") : output;
  write_metric_csv(path, r);
  std::ifstream in(path);
  out << in.rdbuf();
  return 0;
}

int run_predict(const fs::path& checkpoint, const fs::path& window, std::int64_t start_step,
                const fs::path& output, std::ostream& out) {
  auto model = load_checkpoint(checkpoint);
  const ModelConfig& cfg = model->config();
  const RawSeries w = series_from_array(read_dense_array(window));
  if (w.num_nodes != cfg.num_nodes) {
    throw DatasetError("window has " + std::to_string(w.num_nodes) + " nodes but the model has " +
                       std::to_string(cfg.num_nodes));
  }
  if (w.steps < cfg.horizon_in) {
    throw DatasetError("window has " + std::to_string(w.steps) + " rows, need " +
                       std::to_string(cfg.horizon_in));
  }
  RawSeries s;
  s.num_nodes = w.num_nodes;
  s.steps = start_step + cfg.horizon_in + cfg.horizon_out;
  if (auto info = find_dataset_info(cfg.dataset)) s.start_offset = info->start_offset;
  s.values.assign(static_cast<std::size_t>(s.steps * s.num_nodes), 0.0);
  for (std::int64_t t = 0; t < cfg.horizon_in; ++t) {
    for (std::int64_t n = 0; n < s.num_nodes; ++n) {
      s.values[static_cast<std::size_t>((start_step + t) * s.num_nodes + n)] = w.at(t, n);
    }
  }
  const std::int64_t starts[] = {start_step};
  const TrafficWindowBatch batch =
      make_batch(s, model->normalizer(), starts, cfg.horizon_in, cfg.horizon_out);
  NoGradGuard no_grad;
  const Tensor pred = model->forward(batch).prediction;
  std::ostringstream csv;
  csv << std::setprecision(10);
  const auto d = pred.data();
  for (std::int64_t k = 0; k < cfg.horizon_out; ++k) {
    for (std::int64_t n = 0; n < cfg.num_nodes; ++n) {
      csv << (n ? "," : "") << d[static_cast<std::size_t>(k * cfg.num_nodes + n)];
    }
    csv << '\n';
  }
  if (!output.empty()) write_file_atomic(output, csv.str());
  out << csv.str();
  return 0;
}

SweepGrid parse_sweep_grid(const std::string& text) {
  SweepGrid g;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError({"grid line " + std::to_string(lineno) + ": expected key = values"});
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") {
      g.base_config = value;
    } else if (key == "set") {
      g.fixed.push_back(value);
    } else {
      std::vector<std::string> values;
      std::stringstream vs(value);
      std::string v;
      while (std::getline(vs, v, ',')) {
        if (!trim(v).empty()) values.push_back(trim(v));
      }
      if (values.empty()) {
        throw ConfigError({"grid line " + std::to_string(lineno) + ": no values for " + key});
      }
      g.axes.emplace_back(key, values);
    }
  }
  return g;
}

std::vector<std::vector<std::string>> expand_grid(const SweepGrid& grid, const ModelConfig& base) {
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& [key, values] : grid.axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        auto q = p;
        if (key == "d_t") {
          const std::int64_t dt = std::stoll(v);
          if (dt < 2) throw ConfigError({"d_t must be >= 2 to split into d_tod and d_dow"});
          auto tod = static_cast<std::int64_t>(std::llround(
              static_cast<double>(dt * base.d_tod) / static_cast<double>(base.d_t())));
          tod = std::clamp<std::int64_t>(tod, 1, dt - 1);
          q.push_back("d_tod=" + std::to_string(tod));
          q.push_back("d_dow=" + std::to_string(dt - tod));
        } else {
          q.push_back(key + "=" + v);
        }
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

int run_sweep(const fs::path& grid_path, const std::vector<std::string>& overrides,
              std::ostream& out) {
  std::ifstream in(grid_path);
  if (!in) throw ConfigError({"cannot read grid file " + grid_path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  const SweepGrid grid = parse_sweep_grid(buf.str());
  std::vector<std::string> base_overrides = grid.fixed;
  base_overrides.insert(base_overrides.end(), overrides.begin(), overrides.end());
  const ModelConfig base = grid.base_config.empty()
                               ? parse_config("", base_overrides)
                               : load_config(grid_path.parent_path() / grid.base_config, base_overrides);
  apply_threads(base);
  const auto points = expand_grid(grid, base);
  const fs::path root = base.output_dir;
  fs::create_directories(root);

  std::ostringstream table;
  for (const auto& [key, values] : grid.axes) table << key << ',';
  table << "best_epoch,best_val_loss,mae,rmse,mape\n";
  out << table.str();
  std::string loaded_key;
  RawSeries series;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<std::string> ov = base_overrides;
    ov.insert(ov.end(), points[i].begin(), points[i].end());
    ov.push_back("output_dir=" + (root / ("point_" + std::to_string(i))).string());
    const ModelConfig cfg = grid.base_config.empty()
                                ? parse_config("", ov)
                                : load_config(grid_path.parent_path() / grid.base_config, ov);
    const std::string key = cfg.dataset + "|" + std::to_string(cfg.num_nodes) + "|" +
                            std::to_string(cfg.seed) + "|" + std::to_string(cfg.synthetic_steps) +
                            "|" + format_double(cfg.synthetic_noise) + "|" +
                            format_double(cfg.synthetic_coupling);
    if (key != loaded_key) {
      series = load_series(cfg, default_data_root());
      loaded_key = key;
    }
    const DataSplits splits = split_and_window(series, cfg);
    MetaDG model(cfg);
    TrainOptions opt;
    opt.output_dir = cfg.output_dir;
    opt.dataset_id = cfg.dataset;
    const TrainResult res = train_model(model, series, splits, opt);
    std::ostringstream row;
    row << std::setprecision(8);
    std::size_t a = 0;
    for (const auto& [key, values] : grid.axes) {
      const std::size_t stride = [&] {
        std::size_t s = 1;
        for (std::size_t j = a + 1; j < grid.axes.size(); ++j) s *= grid.axes[j].second.size();
        return s;
      }();
      row << values[(i / stride) % values.size()] << ',';
      ++a;
    }
    row << res.best_epoch << ',' << res.best_val_loss << ',' << res.test.overall.mae << ','
        << res.test.overall.rmse << ',' << res.test.overall.mape << '\n';
    table << row.str();
    out << row.str();
    out.flush();
    write_file_atomic(root / "sweep.csv", table.str());
  }
  return 0;
}

int run_dump_graph(const fs::path& checkpoint, std::int64_t window_index, const std::string& split,
                   const fs::path& output, std::ostream& out) {
  auto model = load_checkpoint(checkpoint);
  const ModelConfig& cfg = model->config();
  const RawSeries series = load_series(cfg, default_data_root());
  const DataSplits splits = split_and_window(series, cfg);
  const auto& starts = pick_split(splits, split).window_starts;
  if (window_index < 0 || window_index >= static_cast<std::int64_t>(starts.size())) {
    throw std::out_of_range("window index " + std::to_string(window_index) + " outside [0, " +
                            std::to_string(starts.size()) + ") of the " + split + " split");
  }
  const std::int64_t start[] = {starts[static_cast<std::size_t>(window_index)]};
  const TrafficWindowBatch batch =
      make_batch(series, model->normalizer(), start, cfg.horizon_in, cfg.horizon_out);
  NoGradGuard no_grad;
  ForwardOptions fo;
  fo.trace = true;
  const ForwardResult r = model->forward(batch, fo);
  const fs::path dir =
      output.empty() ? checkpoint / "graphs" / (split + "_window_" + std::to_string(window_index))
                     : output;
  std::size_t files = 0;
  for (const auto& [side, trace] : {std::pair{"encoder", &r.encoder}, std::pair{"decoder", &r.decoder}}) {
    fs::create_directories(dir / side);
    for (std::size_t t = 0; t < trace->size(); ++t) {
      std::ostringstream stem;
      stem << "step_" << std::setw(2) << std::setfill('0') << t + 1;
      const StepTrace& st = (*trace)[t];
      if (st.p.defined()) write_matrix_csv(dir / side / (stem.str() + "_p.csv"), st.p), ++files;
      write_matrix_csv(dir / side / (stem.str() + "_phi.csv"), st.phi), ++files;
      write_matrix_csv(dir / side / (stem.str() + "_a_tilde.csv"), st.graph.a_tilde), ++files;
    }
  }
  out << "wrote " << files << " matrices to " << dir.string() << '\n';
  return 0;
}

}  // namespace metadg
