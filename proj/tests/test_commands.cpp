#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "metadg/commands.hpp"
#include "metadg/checkpoint.hpp"

using namespace metadg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metadg_cmd_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string tiny_config_text(const fs::path& out) {
  return "dataset = synthetic\n"
         "num_nodes = 4\n"
         "synthetic_steps = 300\n"
         "horizon_in = 3\n"
         "horizon_out = 2\n"
         "d_s = 3\nd_tod = 2\nd_dow = 1\nd_c = 2\nd_hidden = 5\nd_attn = 4\n"
         "dropout = 0\nbatch_size = 8\nmax_epochs = 2\npatience = 2\nthreads = 1\n"
         "output_dir = " +
         out.string() + "\n";
}

}  // namespace

TEST_CASE("sweep grid parsing and expansion") {
  const SweepGrid g = parse_sweep_grid("# sizes\nconfig = base.conf\nset = max_epochs=1\nd_s = 8, 12, 16, 20\n");
  CHECK(g.base_config == "base.conf");
  CHECK(g.fixed == std::vector<std::string>{"max_epochs=1"});
  REQUIRE(g.axes.size() == 1);
  const auto pts = expand_grid(g, ModelConfig{});
  REQUIRE(pts.size() == 4);
  CHECK(pts[0] == std::vector<std::string>{"d_s=8"});
  CHECK(pts[3] == std::vector<std::string>{"d_s=20"});

  ModelConfig base;  // d_tod 10, d_dow 2
  const auto two = expand_grid(parse_sweep_grid("d_s = 8, 12\nd_t = 6, 12\n"), base);
  REQUIRE(two.size() == 4);
  CHECK(two[1] == std::vector<std::string>{"d_s=8", "d_tod=10", "d_dow=2"});
  CHECK(two[2] == std::vector<std::string>{"d_s=12", "d_tod=5", "d_dow=1"});
  CHECK_THROWS_AS(parse_sweep_grid("d_s\n"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_grid("d_s = \n"), ConfigError);
}

TEST_CASE("node-count mismatch names both counts") {
  const fs::path root = scratch("mismatch");
  RawSeries s = make_synthetic(3, 50, 1);
  save_series(s, root / "three.npy");
  ModelConfig cfg;
  cfg.dataset = "three.npy";
  cfg.num_nodes = 5;
  try {
    load_series(cfg, root);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('5') != std::string::npos);
  }
}

TEST_CASE("train, evaluate, predict and dump-graph end to end") {
  const fs::path dir = scratch("e2e");
  const fs::path run = dir / "run";
  std::ofstream(dir / "tiny.conf") << tiny_config_text(run);
  std::ostringstream log;
  CHECK(run_train(dir / "tiny.conf", {"seed=3"}, log) == 0);
  const fs::path ckpt = run / "checkpoints" / "best";
  REQUIRE(fs::is_directory(ckpt));
  CHECK(read_lines(run / "metrics.csv").size() == 3);
  CHECK(read_lines(run / "results.csv").front() == "horizon,mae,rmse,mape");

  CHECK(run_evaluate(ckpt, "test", {}, log) == 0);
  const auto eval = read_lines(ckpt / "evaluation_test.csv");
  REQUIRE(eval.size() == 4);
  CHECK(eval[0] == "horizon,mae,rmse,mape");
  CHECK(eval[3].rfind("average,", 0) == 0);

  std::ofstream(dir / "window.csv") << "10,20,30,40\n11,21,31,41\n12,22,32,42\n";
  std::ostringstream pred;
  CHECK(run_predict(ckpt, dir / "window.csv", 0, dir / "pred.csv", pred) == 0);
  CHECK(read_lines(dir / "pred.csv").size() == 2);
  std::ofstream(dir / "short.csv") << "10,20,30,40\n";
  CHECK_THROWS_AS(run_predict(ckpt, dir / "short.csv", 0, {}, pred), DatasetError);

  CHECK(run_dump_graph(ckpt, 0, "test", {}, log) == 0);
  const fs::path graphs = ckpt / "graphs" / "test_window_0" / "encoder";
  std::size_t mats = 0;
  for (const auto& e : fs::directory_iterator(graphs)) {
    if (e.path().filename().string().find("_a_tilde") == std::string::npos) continue;
    ++mats;
    for (const auto& line : read_lines(e.path())) {
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) CHECK(std::stod(cell) >= 0.0);
    }
  }
  CHECK(mats == 3);
  CHECK_THROWS(run_dump_graph(ckpt, 100000, "test", {}, log));
  CHECK_THROWS_AS(run_evaluate(dir / "missing", "test", {}, log), CheckpointError);
}

TEST_CASE("sweep writes one row per grid point") {
  const fs::path dir = scratch("sweep");
  std::ofstream(dir / "tiny.conf") << tiny_config_text(dir / "out");
  std::ofstream(dir / "grid.txt") << "config = tiny.conf\nset = max_epochs=1\nset = patience=1\nd_s = 8, 12, 16, 20\n";
  std::ostringstream log;
  CHECK(run_sweep(dir / "grid.txt", {}, log) == 0);
  const auto rows = read_lines(dir / "out" / "sweep.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "d_s,best_epoch,best_val_loss,mae,rmse,mape");
  CHECK(rows[1].rfind("8,", 0) == 0);
  CHECK(rows[4].rfind("20,", 0) == 0);
  CHECK(fs::exists(dir / "out" / "point_3" / "checkpoints" / "best"));
}
