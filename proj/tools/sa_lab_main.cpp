#include <CLI11.hpp>
#include <iostream>

#include "salab/commands.hpp"

namespace {

struct Cli {
  std::string config_path;
  salab::CommandOptions opts;
  std::uint64_t seed = 0;
  int trajectories = 0;
  int steps = 0;
};

void add_common(CLI::App* cmd, Cli& cli) {
  cmd->add_option("--config", cli.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", cli.opts.out_dir, "output directory (default: .)");
  auto* seed = cmd->add_option("--seed", cli.seed, "override master_seed");
  auto* traj = cmd->add_option("--trajectories", cli.trajectories, "override trajectory count");
  auto* steps = cmd->add_option("--steps", cli.steps, "override horizon K");
  cmd->add_flag("--allow-diverged", cli.opts.allow_diverged,
                "drop diverged trajectories instead of failing");
  cmd->callback([seed, traj, steps, &cli] {
    if (seed->count() > 0) cli.opts.seed_override = cli.seed;
    if (traj->count() > 0) cli.opts.trajectories_override = cli.trajectories;
    if (steps->count() > 0) cli.opts.steps_override = cli.steps;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sa-lab: finite-time analysis of constant-stepsize stochastic approximation "
               "(TD(0) and Q-learning with linear features on finite MDPs)"};
  app.require_subcommand(1);

  Cli cli;
  CLI::App* check = app.add_subcommand("check", "run assumption checks and emit a report");
  CLI::App* analyze = app.add_subcommand("analyze", "derive the bound constants table");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo mean-square-error curve");
  CLI::App* bound = app.add_subcommand("bound", "finite-time bound curve");
  CLI::App* compare = app.add_subcommand("compare", "join simulation and bound, check domination");
  for (auto* cmd : {check, analyze, simulate, bound, compare}) add_common(cmd, cli);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Keep the documented exit contract: usage problems are code 1 (help and
    // version requests still exit 0).
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const salab::ExperimentConfig config = salab::load_config(cli.config_path);
    salab::RunReport report;
    if (check->parsed()) report = salab::cmd_check(config, cli.opts);
    if (analyze->parsed()) report = salab::cmd_analyze(config, cli.opts);
    if (simulate->parsed()) report = salab::cmd_simulate(config, cli.opts);
    if (bound->parsed()) report = salab::cmd_bound(config, cli.opts);
    if (compare->parsed()) report = salab::cmd_compare(config, cli.opts);

    if (!report.summary.empty()) std::cerr << report.summary << "\n";
    for (const auto& file : report.emitted_files) std::cerr << "wrote " << file << "\n";
    return report.exit_code;
  } catch (const salab::SaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return salab::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
