// Command-line front end: sgne <run|validate|check-constraints|epsilon-gap|plot-data> --config <path> ...

#include "sgne/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Stochastic generalized Nash equilibrium solver for dynamic games with chance constraints"};
  app.require_subcommand(1);

  std::string configPath;
  std::uint64_t seed = 0;
  sgne::CliOptions opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", configPath, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out-dir", opt.outDir, "Directory for outputs (and relative inputs)");
  };

  auto* run = app.add_subcommand("run", "Run the solver and write trace, strategies and summary");
  common(run);
  run->add_flag("--force", opt.force, "Run even if the convergence conditions are violated");
  run->add_option("--resume", opt.resume, "Resume from a checkpoint file");

  auto* validate = app.add_subcommand("validate", "Check the solver configuration against the convergence conditions");
  common(validate);

  auto* check = app.add_subcommand("check-constraints", "Monte Carlo check of the chance constraints at a strategy");
  common(check);
  check->add_option("--strategies", opt.strategies, "Strategy CSV (default: <out-dir>/<output.strategies>)");

  auto* gap = app.add_subcommand("epsilon-gap", "Estimate the under-approximation gap M_j at a strategy");
  common(gap);
  gap->add_option("--strategies", opt.strategies, "Strategy CSV (default: <out-dir>/<output.strategies>)");
  gap->add_option("--trace", opt.trace, "Trace CSV whose last multipliers weight the certificate");

  auto* plot = app.add_subcommand("plot-data", "Write tidy CSV files for plotting");
  common(plot);
  plot->add_option("--trace", opt.trace, "Trace CSV (default: <out-dir>/<output.trace>)");
  plot->add_option("--strategies", opt.strategies, "Strategy CSV (default: <out-dir>/<output.strategies>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sgne::exit_code::error;
  }

  sgne::RunConfig cfg;
  try {
    cfg = sgne::parse_config(configPath);
  } catch (const sgne::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return sgne::exit_code::error;
  }
  for (auto* sub : {run, validate, check, gap, plot}) {
    if (sub->parsed() && sub->count("--seed") > 0) opt.seed = seed;
  }
  sgne::apply_overrides(cfg, opt);

  if (run->parsed()) return sgne::cmd_run(cfg, opt, std::cout, std::cerr);
  if (validate->parsed()) return sgne::cmd_validate(cfg, opt, std::cout, std::cerr);
  if (check->parsed()) return sgne::cmd_check_constraints(cfg, opt, std::cout, std::cerr);
  if (gap->parsed()) return sgne::cmd_epsilon_gap(cfg, opt, std::cout, std::cerr);
  return sgne::cmd_plotdata(cfg, opt, std::cout, std::cerr);
}
