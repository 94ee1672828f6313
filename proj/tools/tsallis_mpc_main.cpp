// Command-line front end: run experiments, sweep hyperparameters, and
// self-check library invariants.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tsmpc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based stochastic optimal control experiments"};
  app.require_subcommand(1);

  tsmpc::CliOptions options;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* config_opt =
        sub->add_option("--config", options.config_path, "Experiment config JSON");
    if (needs_config) config_opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", options.out_dir, "Directory for output artifacts")
        ->capture_default_str();
    sub->add_option("--threads", options.threads,
                    "Worker threads (0 = hardware default; env TSALLIS_MPC_THREADS overrides)")
        ->capture_default_str();
    sub->add_option("--seed-offset", options.seed_offset,
                    "Added to the config's trial and eval seeds")
        ->capture_default_str();
  };

  CLI::App* run = app.add_subcommand("run", "Run one experiment and write trial artifacts");
  add_common(run, true);

  CLI::App* sweep =
      app.add_subcommand("sweep", "Grid or sensitivity sweep around a base config");
  add_common(sweep, true);
  sweep->add_option("--grid", options.grid_path, "Sweep spec JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--mode", options.mode, "Sweep mode: grid | sensitivity")
      ->check(CLI::IsMember({"grid", "sensitivity"}))
      ->capture_default_str();

  CLI::App* check = app.add_subcommand("check", "Run fast library invariant checks");
  check->add_option("--inject-fault", options.inject_fault,
                    "Deliberately break one invariant (e.g. ara-sign) to test detection");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return tsmpc::cmd_run(options, std::cout, std::cerr);
  if (sweep->parsed()) return tsmpc::cmd_sweep(options, std::cout, std::cerr);
  return tsmpc::cmd_check(options, std::cout, std::cerr);
}
