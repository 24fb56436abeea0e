#include <CLI11.hpp>

#include <iostream>

#include "metadg/checkpoint.hpp"
#include "metadg/commands.hpp"
#include "metadg/config.hpp"
#include "metadg/data.hpp"
#include "metadg/train.hpp"

int main(int argc, char** argv) {
  CLI::App app{"MetaDG traffic-flow forecaster"};
  app.require_subcommand(1);
  app.footer(std::string("Dataset files are read from $") + metadg::kDataRootEnv +
             " (default ./data).");

  std::string config_path, checkpoint, window, grid, split = "test", output;
  std::vector<std::string> sets;
  std::int64_t window_index = 0, start_step = 0;

  auto* train = app.add_subcommand("train", "train a model and write checkpoints + manifest");
  train->add_option("--config", config_path, "flat key = value config file")->required();
  train->add_option("--set", sets, "override k=v (repeatable)");

  auto* evaluate = app.add_subcommand("evaluate", "metric table of a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--split", split, "train, val or test");
  evaluate->add_option("--output", output, "CSV path (default <checkpoint>/evaluation_<split>.csv)");

  auto* predict = app.add_subcommand("predict", "forecast T' steps from one input window");
  predict->add_option("--checkpoint", checkpoint)->required();
  predict->add_option("--window", window, "[T x N] raw flow (.npy/.npz/.csv)")->required();
  predict->add_option("--start-step", start_step, "global step index of the first row");
  predict->add_option("--output", output, "CSV path for the [T' x N] forecast");

  auto* sweep = app.add_subcommand("sweep", "train every point of a parameter grid");
  sweep->add_option("--grid", grid)->required();
  sweep->add_option("--set", sets, "override k=v applied to every point");

  auto* dump = app.add_subcommand("dump-graph", "write P, phi and adjacency per step of a window");
  dump->add_option("--checkpoint", checkpoint)->required();
  dump->add_option("--window-index", window_index)->required();
  dump->add_option("--split", split, "train, val or test");
  dump->add_option("--output", output, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return metadg::run_train(config_path, sets, std::cout);
    if (*evaluate) return metadg::run_evaluate(checkpoint, split, output, std::cout);
    if (*predict) return metadg::run_predict(checkpoint, window, start_step, output, std::cout);
    if (*sweep) return metadg::run_sweep(grid, sets, std::cout);
    if (*dump) return metadg::run_dump_graph(checkpoint, window_index, split, output, std::cout);
  } catch (const metadg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const metadg::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 3;
  } catch (const metadg::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return 4;
  } catch (const metadg::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
