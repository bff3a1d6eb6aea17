// Command-line front end: `higgsflow run <config.json>` and `higgsflow suite <dir>`.

#include "higgsflow/runner.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Heat flow and stability lab for Higgs bundles on a lattice torus"};
  app.require_subcommand(1);

  bool verbose = false;
  int max_steps = 0;
  app.add_flag("-v,--verbose", verbose, "Print progress while flows run");
  auto* override_opt =
      app.add_option("--max-steps-override", max_steps, "Replace flow.max_steps of every scenario")
          ->check(CLI::PositiveNumber);

  std::string config;
  auto* run = app.add_subcommand("run", "Run one scenario config");
  run->add_option("config", config, "Scenario JSON file")->required();

  std::string dir;
  auto* suite = app.add_subcommand("suite", "Run every *.json scenario in a directory");
  suite->add_option("dir", dir, "Directory of scenario configs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 uses 0 for --help; every other parse problem is an execution error
    return app.exit(e) == 0 ? 0 : 1;
  }

  higgsflow::RunOptions opts;
  opts.verbose = verbose;
  if (*override_opt) opts.max_steps_override = max_steps;
  if (*run) return higgsflow::run_scenario(config, opts);
  return higgsflow::run_suite(dir, opts);
}
