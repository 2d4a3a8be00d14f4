#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "salab/config.hpp"
#include "salab/lyapunov.hpp"
#include "salab/qlearn.hpp"
#include "salab/td.hpp"

namespace salab {

struct RunReport {
  int exit_code = 0;  // 0 ok, 1 validation, 2 assumption/bound failure, 3 divergence
  bool pass = true;
  std::vector<std::string> emitted_files;
  std::string summary;
};

struct CommandOptions {
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  std::optional<int> trajectories_override;
  std::optional<int> steps_override;
  bool allow_diverged = false;
};

// Config materialized into a runnable problem: step map, noise chain, the
// Lyapunov certificate for the algorithm's route, and the sigma closure over
// the lifted chain's envelope.
struct BuiltProblem {
  std::unique_ptr<StepMap> map;
  std::shared_ptr<const ChainModel> chain;
  QuadraticLyapunov cert;
  double L = 0.0;
  double delta = 0.0;  // resolved default when the config leaves it out
  SigmaFn sigma_fn;
  VectorXd theta0_centered;
  double c_est = 0.0;  // qlearning only
};

BuiltProblem build_problem(const ExperimentConfig& config);

RunReport cmd_check(const ExperimentConfig& config, const CommandOptions& opts);
RunReport cmd_analyze(const ExperimentConfig& config, const CommandOptions& opts);
RunReport cmd_simulate(const ExperimentConfig& config, const CommandOptions& opts);
RunReport cmd_bound(const ExperimentConfig& config, const CommandOptions& opts);
RunReport cmd_compare(const ExperimentConfig& config, const CommandOptions& opts);

// Index of the first k with mse + 3 stderr > bound, or -1 when the bound
// dominates everywhere. This is the exact rule behind compare.csv's
// `dominated` column.
long first_domination_violation(const MseCurve& mse, const std::vector<double>& bounds);

// Maps error codes onto the documented exit codes.
int exit_code_for(ErrorCode code);

}  // namespace salab
