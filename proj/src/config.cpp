#include "metadg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace metadg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

struct Key {
  std::string name;
  bool runtime;
  std::function<std::string(const ModelConfig&)> get;
  // Returns an error message, empty on success.
  std::function<std::string(ModelConfig&, const std::string&)> set;
};

Key int_key(std::string name, std::int64_t ModelConfig::*field, bool runtime = false) {
  return {name, runtime, [field](const ModelConfig& c) { return std::to_string(c.*field); },
          [field, name](ModelConfig& c, const std::string& v) -> std::string {
            std::int64_t x = 0;
            if (!parse_int(v, x)) return name + ": expected integer, got '" + v + "'";
            c.*field = x;
            return {};
          }};
}

Key double_key(std::string name, double ModelConfig::*field) {
  return {name, false, [field](const ModelConfig& c) { return format_double(c.*field); },
          [field, name](ModelConfig& c, const std::string& v) -> std::string {
            double x = 0;
            if (!parse_double(v, x)) return name + ": expected number, got '" + v + "'";
            c.*field = x;
            return {};
          }};
}

Key bool_key(std::string name, bool ModelConfig::*field) {
  return {name, false, [field](const ModelConfig& c) { return std::string(c.*field ? "true" : "false"); },
          [field, name](ModelConfig& c, const std::string& v) -> std::string {
            bool x = false;
            if (!parse_bool(v, x)) return name + ": expected boolean, got '" + v + "'";
            c.*field = x;
            return {};
          }};
}

Key flag_key(std::string name, bool AblationFlags::*field) {
  return {name, false,
          [field](const ModelConfig& c) { return std::string(c.ablation.*field ? "true" : "false"); },
          [field, name](ModelConfig& c, const std::string& v) -> std::string {
            bool x = false;
            if (!parse_bool(v, x)) return name + ": expected boolean, got '" + v + "'";
            c.ablation.*field = x;
            return {};
          }};
}

Key string_key(std::string name, std::string ModelConfig::*field, bool runtime = false) {
  return {name, runtime, [field](const ModelConfig& c) { return c.*field; },
          [field](ModelConfig& c, const std::string& v) -> std::string {
            c.*field = v;
            return {};
          }};
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(string_key("dataset", &ModelConfig::dataset));
    k.push_back(int_key("num_nodes", &ModelConfig::num_nodes));
    k.push_back(int_key("horizon_in", &ModelConfig::horizon_in));
    k.push_back(int_key("horizon_out", &ModelConfig::horizon_out));
    k.push_back(int_key("input_dim", &ModelConfig::input_dim));
    k.push_back(int_key("d_s", &ModelConfig::d_s));
    k.push_back(int_key("d_tod", &ModelConfig::d_tod));
    k.push_back(int_key("d_dow", &ModelConfig::d_dow));
    k.push_back(int_key("d_c", &ModelConfig::d_c));
    k.push_back(int_key("d_hidden", &ModelConfig::d_hidden));
    k.push_back(int_key("d_attn", &ModelConfig::d_attn));
    k.push_back(double_key("delta", &ModelConfig::delta));
    k.push_back(double_key("dropout", &ModelConfig::dropout));
    k.push_back(flag_key("use_sce", &AblationFlags::use_sce));
    k.push_back(flag_key("use_tce", &AblationFlags::use_tce));
    k.push_back(flag_key("use_dgq", &AblationFlags::use_dgq));
    k.push_back(flag_key("tsce_order", &AblationFlags::tsce_order));
    k.push_back(flag_key("joined_embedding", &AblationFlags::joined_embedding));
    k.push_back({"candidate_activation", false,
                 [](const ModelConfig& c) {
                   return std::string(c.candidate_activation == CandidateActivation::tanh ? "tanh"
                                                                                          : "sigmoid");
                 },
                 [](ModelConfig& c, const std::string& v) -> std::string {
                   if (v == "tanh") c.candidate_activation = CandidateActivation::tanh;
                   else if (v == "sigmoid") c.candidate_activation = CandidateActivation::sigmoid;
                   else return "candidate_activation: expected tanh or sigmoid, got '" + v + "'";
                   return {};
                 }});
    k.push_back({"weaken_mode", false,
                 [](const ModelConfig& c) {
                   return std::string(c.weaken_mode == WeakenMode::adaptive ? "adaptive" : "fixed");
                 },
                 [](ModelConfig& c, const std::string& v) -> std::string {
                   if (v == "adaptive") c.weaken_mode = WeakenMode::adaptive;
                   else if (v == "fixed") c.weaken_mode = WeakenMode::fixed;
                   else return "weaken_mode: expected adaptive or fixed, got '" + v + "'";
                   return {};
                 }});
    k.push_back(double_key("weaken_factor", &ModelConfig::weaken_factor));
    k.push_back(bool_key("single_support", &ModelConfig::single_support));
    k.push_back(bool_key("teacher_forcing", &ModelConfig::teacher_forcing));
    k.push_back(int_key("batch_size", &ModelConfig::batch_size));
    k.push_back(int_key("max_epochs", &ModelConfig::max_epochs));
    k.push_back(int_key("patience", &ModelConfig::patience));
    k.push_back(double_key("learning_rate", &ModelConfig::learning_rate));
    k.push_back(double_key("weight_decay", &ModelConfig::weight_decay));
    k.push_back(double_key("grad_clip", &ModelConfig::grad_clip));
    k.push_back(double_key("adam_beta1", &ModelConfig::adam_beta1));
    k.push_back(double_key("adam_beta2", &ModelConfig::adam_beta2));
    k.push_back(double_key("adam_eps", &ModelConfig::adam_eps));
    k.push_back(double_key("huber_kappa", &ModelConfig::huber_kappa));
    k.push_back(double_key("mape_threshold", &ModelConfig::mape_threshold));
    k.push_back(double_key("train_ratio", &ModelConfig::train_ratio));
    k.push_back(double_key("val_ratio", &ModelConfig::val_ratio));
    k.push_back(int_key("max_train_windows", &ModelConfig::max_train_windows));
    k.push_back(int_key("max_eval_windows", &ModelConfig::max_eval_windows));
    k.push_back(int_key("synthetic_steps", &ModelConfig::synthetic_steps));
    k.push_back(double_key("synthetic_noise", &ModelConfig::synthetic_noise));
    k.push_back(double_key("synthetic_coupling", &ModelConfig::synthetic_coupling));
    k.push_back(int_key("seed", &ModelConfig::seed));
    k.push_back(int_key("threads", &ModelConfig::threads, true));
    k.push_back(string_key("output_dir", &ModelConfig::output_dir, true));
    std::sort(k.begin(), k.end(), [](const Key& a, const Key& b) { return a.name < b.name; });
    return k;
  }();
  return keys;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : key_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

using Assignment = std::pair<std::string, std::string>;

std::vector<Assignment> parse_lines(const std::string& text, std::vector<std::string>& problems) {
  std::vector<Assignment> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_assignments(ModelConfig& cfg, const std::vector<Assignment>& items,
                       std::vector<std::string>& problems) {
  for (const auto& [key, value] : items) {
    if (key != "preset") continue;
    try {
      cfg = preset_config(value);
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    }
  }
  for (const auto& [key, value] : items) {
    if (key == "preset") continue;
    const Key* k = find_key(key);
    if (!k) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    if (auto err = k->set(cfg, value); !err.empty()) problems.push_back(err);
  }
}

std::vector<Assignment> split_overrides(const std::vector<std::string>& overrides,
                                        std::vector<std::string>& problems) {
  std::vector<Assignment> out;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      problems.push_back("override '" + o + "' is not key=value");
      continue;
    }
    out.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  return out;
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

ModelConfig preset_config(const std::string& dataset_id) {
  ModelConfig c;
  c.dataset = dataset_id;
  struct Preset {
    const char* id;
    std::int64_t nodes, d_s, d_tod, d_dow, d_c, batch;
  };
  static constexpr Preset presets[] = {
      {"PEMS03", 358, 12, 8, 8, 8, 16},
      {"PEMS04", 307, 16, 12, 4, 6, 16},
      {"PEMS07", 883, 16, 8, 8, 8, 8},
      {"PEMS08", 170, 12, 10, 2, 8, 16},
  };
  for (const auto& p : presets) {
    if (dataset_id == p.id) {
      c.num_nodes = p.nodes;
      c.d_s = p.d_s;
      c.d_tod = p.d_tod;
      c.d_dow = p.d_dow;
      c.d_c = p.d_c;
      c.batch_size = p.batch;
      return c;
    }
  }
  throw ConfigError({"unknown preset '" + dataset_id + "'"});
}

void apply_overrides(ModelConfig& cfg, const std::vector<std::string>& assignments) {
  std::vector<std::string> problems;
  auto items = split_overrides(assignments, problems);
  apply_assignments(cfg, items, problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

ModelConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  ModelConfig cfg;
  apply_assignments(cfg, parse_lines(text, problems), problems);
  apply_assignments(cfg, split_overrides(overrides, problems), problems);
  if (problems.empty()) problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

std::vector<std::string> validate(const ModelConfig& c) {
  std::vector<std::string> p;
  auto positive = [&p](const char* name, std::int64_t v) {
    if (v < 1) p.push_back(std::string(name) + " must be >= 1, got " + std::to_string(v));
  };
  positive("num_nodes", c.num_nodes);
  positive("horizon_in", c.horizon_in);
  positive("horizon_out", c.horizon_out);
  positive("input_dim", c.input_dim);
  positive("d_s", c.d_s);
  positive("d_tod", c.d_tod);
  positive("d_dow", c.d_dow);
  positive("d_c", c.d_c);
  positive("d_hidden", c.d_hidden);
  positive("d_attn", c.d_attn);
  positive("batch_size", c.batch_size);
  positive("max_epochs", c.max_epochs);
  positive("patience", c.patience);
  if (c.input_dim != 3) p.push_back("input_dim must be 3 (flow, tod, dow)");
  if (c.patience > c.max_epochs) p.push_back("patience must not exceed max_epochs");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) p.push_back("dropout must be in [0, 1)");
  if (!(c.delta > 0.0)) p.push_back("delta must be > 0");
  if (!(c.learning_rate > 0.0)) p.push_back("learning_rate must be > 0");
  if (c.weight_decay < 0.0) p.push_back("weight_decay must be >= 0");
  if (c.grad_clip < 0.0) p.push_back("grad_clip must be >= 0 (0 disables)");
  if (!(c.huber_kappa > 0.0)) p.push_back("huber_kappa must be > 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) p.push_back("adam_beta1 must be in [0, 1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) p.push_back("adam_beta2 must be in [0, 1)");
  if (!(c.adam_eps > 0.0)) p.push_back("adam_eps must be > 0");
  if (!(c.train_ratio > 0.0 && c.val_ratio > 0.0 && c.train_ratio + c.val_ratio < 1.0)) {
    p.push_back("train_ratio and val_ratio must be positive with sum < 1");
  }
  if (c.weaken_factor < 0.0) p.push_back("weaken_factor must be >= 0");
  if (c.max_train_windows < 0 || c.max_eval_windows < 0) p.push_back("window caps must be >= 0");
  if (c.synthetic_steps < 1) p.push_back("synthetic_steps must be >= 1");
  if (c.synthetic_noise < 0.0) p.push_back("synthetic_noise must be >= 0");
  if (c.threads < 0) p.push_back("threads must be >= 0");
  return p;
}

void validate_or_throw(const ModelConfig& cfg) {
  auto problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

std::string serialize(const ModelConfig& cfg, bool include_runtime) {
  std::string out;
  for (const auto& k : key_table()) {
    if (k.runtime && !include_runtime) continue;
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << serialize(cfg);
  }
  std::filesystem::rename(tmp, path);
}

std::string config_hash(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(cfg, false)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : key_table()) names.push_back(k.name);
  return names;
}

std::string get_config_value(const ModelConfig& cfg, const std::string& key) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError({"unknown key '" + key + "'"});
  return k->get(cfg);
}

}  // namespace metadg
