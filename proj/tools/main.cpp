#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stablerelu/cli/run.hpp"

int main(int argc, char** argv) {
  namespace sc = stablerelu::cli;
  CLI::App app{"Gradient-descent stability experiments for two-layer ReLU networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stablerelu 0.1.0");
  sc::CliConfig cfg;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"train", "train one network and certify the final iterate"},
      {"sweep", "step-size sweep over eta_grid x reps"},
      {"rate", "interval MSE against sample size over n_grid"},
      {"counterexample", "min-norm interpolants on the pure-noise design"},
      {"interpolate", "min-norm second-layer fit on the configured data"},
      {"verify", "certificates for a stored params.json"},
      {"basis", "per-neuron basis export for a stored params.json"},
      {"report", "redraw plots of a finished train run"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", cfg.config_path, "YAML config file")->required();
    sub->add_option("-o,--out", cfg.out_dir, "output directory")->capture_default_str();
    sub->add_option("--set", cfg.overrides, "override a config key, key=value")->take_all();
    sub->add_flag("--plot", cfg.plot, "also write SVG plots");
    sub->callback([&cfg, name = std::string(name)] { cfg.subcommand = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sc::kExitUsage;
  }
  return sc::run(cfg, std::cerr);
}
