#include "metadg/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#ifndef METADG_SOURCE_REVISION
#define METADG_SOURCE_REVISION "unknown"
#endif

namespace metadg {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dims_str(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

Shape parse_dims(const std::string& s) {
  Shape shape;
  if (s == "scalar") return shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) shape.push_back(std::stoll(part));
  return shape;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw CheckpointError("bad number: " + s);
  return v;
}

std::string value_of(const std::string& text, const std::string& key) {
  std::stringstream ss(text);
  std::string line;
  const std::string prefix = key + " = ";
  while (std::getline(ss, line)) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  throw CheckpointError("missing key " + key);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string source_revision() { return METADG_SOURCE_REVISION; }

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << text;
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void round_parameters_to_f32(ParameterStore& store) {
  for (const auto& [name, t] : store.items()) {
    Tensor handle = t;
    for (auto& v : handle.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_checkpoint(const MetaDG& model, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  std::string manifest;
  for (const auto& [name, t] : model.parameters().items()) {
    const std::string file = name + ".f32";
    manifest += name + " f32 " + dims_str(t.shape()) + " " + file + "\n";
    std::vector<float> blob(t.data().begin(), t.data().end());
    std::ofstream out(tmp / file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) throw CheckpointError("cannot write tensor " + name);
  }
  write_file_atomic(tmp / "manifest.txt", manifest);
  write_file_atomic(tmp / "config.txt", serialize(model.config(), false));
  write_file_atomic(tmp / "config_hash", config_hash(model.config()) + "\n");
  write_file_atomic(tmp / "normalizer.txt", "mean = " + format_double(model.normalizer().mean) +
                                                "\nstd = " + format_double(model.normalizer().std) +
                                                "\n");
  // Swap the complete directory in; a crash leaves either the old or the new one.
  const fs::path old = dir.string() + ".old";
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

ModelConfig checkpoint_config(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint not found: " + dir.string());
  ModelConfig cfg;
  try {
    cfg = parse_config(read_text(dir / "config.txt"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint config invalid: " + std::string(e.what()));
  }
  std::string stored = read_text(dir / "config_hash");
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  const std::string actual = config_hash(cfg);
  if (stored != actual) {
    throw CheckpointError("config hash mismatch in " + dir.string() + ": stored " + stored +
                          ", computed " + actual);
  }
  return cfg;
}

std::unique_ptr<MetaDG> load_checkpoint(const fs::path& dir) {
  auto model = std::make_unique<MetaDG>(checkpoint_config(dir));
  ParameterStore& store = model->parameters();
  std::stringstream ss(read_text(dir / "manifest.txt"));
  std::string line;
  std::size_t seen = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string name, dtype, dims, file;
    if (!(ls >> name >> dtype >> dims >> file)) throw CheckpointError("bad manifest line: " + line);
    if (dtype != "f32") throw CheckpointError(name + ": unsupported dtype " + dtype);
    if (!store.contains(name)) throw CheckpointError("unexpected tensor " + name);
    Tensor t = store.get(name);
    const Shape shape = parse_dims(dims);
    if (shape != t.shape()) {
      throw CheckpointError(name + ": checkpoint shape " + shape_str(shape) + ", model expects " +
                            shape_str(t.shape()));
    }
    std::vector<float> blob(static_cast<std::size_t>(t.numel()));
    std::ifstream in(dir / file, std::ios::binary);
    in.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!in || in.peek() != std::char_traits<char>::eof()) {
      throw CheckpointError(name + ": blob size does not match " + shape_str(shape));
    }
    auto data = t.data();
    for (std::size_t i = 0; i < blob.size(); ++i) data[i] = static_cast<double>(blob[i]);
    ++seen;
  }
  if (seen != store.items().size()) {
    throw CheckpointError("checkpoint has " + std::to_string(seen) + " tensors, model needs " +
                          std::to_string(store.items().size()));
  }
  const std::string norm = read_text(dir / "normalizer.txt");
  model->set_normalizer({parse_double(value_of(norm, "mean")), parse_double(value_of(norm, "std"))});
  return model;
}

void write_run_manifest(const RunManifest& m, const fs::path& path) {
  std::string s;
  s += "config_hash = " + m.config_hash + "\n";
  s += "dataset = " + m.dataset_id + "\n";
  s += "source_revision = " + m.source_revision + "\n";
  s += "best_checkpoint = " + m.best_checkpoint + "\n";
  s += "best_epoch = " + std::to_string(m.best_epoch) + "\n";
  s += "best_val_loss = " + format_double(m.best_val_loss) + "\n";
  for (const auto& e : m.epochs) {
    s += "epoch = " + std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
         format_double(e.val_loss) + "," + (e.improved ? "1" : "0") + "\n";
  }
  write_file_atomic(path, s);
}

RunManifest read_run_manifest(const fs::path& path) {
  const std::string text = read_text(path);
  RunManifest m;
  m.config_hash = value_of(text, "config_hash");
  m.dataset_id = value_of(text, "dataset");
  m.source_revision = value_of(text, "source_revision");
  m.best_checkpoint = value_of(text, "best_checkpoint");
  m.best_epoch = std::stoll(value_of(text, "best_epoch"));
  m.best_val_loss = parse_double(value_of(text, "best_val_loss"));
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("epoch = ", 0) != 0) continue;
    std::stringstream ls(line.substr(8));
    std::string a, b, c, d;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, c, ',');
    std::getline(ls, d, ',');
    m.epochs.push_back({std::stoll(a), parse_double(b), parse_double(c), d == "1"});
  }
  return m;
}

}  // namespace metadg
