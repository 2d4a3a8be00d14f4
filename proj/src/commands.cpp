#include "salab/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "salab/csv.hpp"
#include "salab/sa_core.hpp"

namespace salab {
namespace {

using nlohmann::json;

std::string out_path(const CommandOptions& opts, const std::string& name) {
  std::filesystem::create_directories(opts.out_dir);
  return (std::filesystem::path(opts.out_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream stream(path, std::ios::binary);  // byte-stable output
  if (!stream) fail(ErrorCode::ValidationError, "cannot open output file '" + path + "'");
  return stream;
}

json check_to_json(const AssumptionCheck& check) {
  return json{{"name", check.name},
              {"pass", check.pass},
              {"value", check.value},
              {"detail", check.detail}};
}

json envelope_to_json(const MixingEnvelope& env) {
  return json{{"c0", env.c0}, {"eta", env.eta}, {"horizon", env.tv_curve.size()}};
}

json constants_to_json(const BoundConstants& constants, const QuadraticLyapunov& cert) {
  return json{{"delta", constants.delta},
              {"T_star", constants.T_star},
              {"eps_delta", constants.eps_delta},
              {"L", constants.L},
              {"c1", cert.c1},
              {"c2", cert.c2},
              {"c3", cert.c3},
              {"c4", cert.c4},
              {"c1p", constants.c1p},
              {"c2p", constants.c2p},
              {"c2pp", constants.c2pp},
              {"c3p", constants.c3p},
              {"c4p", constants.c4p},
              {"c4pp", constants.c4pp},
              {"c5p", constants.c5p},
              {"c6", constants.c6}};
}

ExperimentConfig apply_overrides(ExperimentConfig config, const CommandOptions& opts) {
  if (opts.seed_override) config.master_seed = *opts.seed_override;
  if (opts.trajectories_override) config.trajectories = *opts.trajectories_override;
  if (opts.steps_override) config.horizon = *opts.steps_override;
  return config;
}

MseCurve simulate_curve(const ExperimentConfig& config, const BuiltProblem& problem,
                        const CommandOptions& opts) {
  MarkovNoise noise(problem.chain, config.initial_noise, config.initial_state);
  MonteCarloOptions mc;
  mc.allow_diverged = opts.allow_diverged;
  return monte_carlo_mse(*problem.map, noise, problem.theta0_centered, config.epsilon,
                         config.horizon, config.trajectories, config.master_seed, mc);
}

}  // namespace

long first_domination_violation(const MseCurve& mse, const std::vector<double>& bounds) {
  if (bounds.size() != mse.mean.size()) {
    fail(ErrorCode::DimensionMismatch, "curves must share the horizon");
  }
  for (std::size_t k = 0; k < mse.mean.size(); ++k) {
    if (mse.mean[k] + 3.0 * mse.std_error[k] > bounds[k]) return static_cast<long>(k);
  }
  return -1;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::IndexOutOfRange:
      return 1;
    case ErrorCode::NonFiniteIterate:
    case ErrorCode::NoConvergence:
      return 3;
    default:
      return 2;
  }
}

BuiltProblem build_problem(const ExperimentConfig& config) {
  BuiltProblem built;

  if (config.algorithm == ExperimentConfig::Algorithm::kTd0) {
    auto problem = std::make_unique<TdProblem>(
        build_td(config.mdp, config.policy, FeatureMap::create(config.features)));
    built.chain = problem->chain_model_ptr();
    built.L = problem->growth_constant();
    const int d = problem->dim();
    MatrixXd Q = config.q_matrix.value_or(MatrixXd::Identity(d, d));
    if (Q.rows() != d || Q.cols() != d) {
      fail(ErrorCode::DimensionMismatch, "q_matrix must be d x d");
    }
    built.cert = solve_lyapunov(problem->A(), Q, built.L);
    built.theta0_centered =
        config.theta0.value_or(VectorXd::Zero(d)) - problem->theta_star();
    built.map = std::move(problem);
  } else {
    auto problem = std::make_unique<QProblem>(
        build_q(config.mdp, config.policy,
                QFeatureMap::create(config.features, config.mdp.n_states, config.mdp.n_actions)));
    built.chain = problem->chain_model_ptr();
    built.L = problem->growth_constant();
    built.c_est = problem->c_est();
    if (problem->c_est() > 0.0) {
      const double c3 = problem->c_est() / ((2.0 - problem->c_est()) * built.L);
      built.cert = identity_certificate(problem->dim(), c3, built.L);
    }
    built.theta0_centered =
        config.theta0.value_or(VectorXd::Zero(problem->dim())) - problem->theta_star();
    built.map = std::move(problem);
  }

  if (!built.chain->envelope) {
    fail(ErrorCode::EnvelopeFailure, "noise chain has no mixing envelope");
  }
  const double c0 = built.chain->envelope->c0;
  const double eta = built.chain->envelope->eta;
  built.sigma_fn = [c0, eta](long T, long T0) { return sigma(T, T0, c0, eta); };

  if (config.algorithm == ExperimentConfig::Algorithm::kQLearning && built.c_est <= 0.0) {
    // Simulation still works; the certificate/bound pipeline does not.
    built.delta = 0.0;
    return built;
  }
  built.delta = config.delta.value_or(0.5 * built.cert.c3 / built.cert.c4);
  return built;
}

RunReport cmd_check(const ExperimentConfig& config_in, const CommandOptions& opts) {
  const ExperimentConfig config = apply_overrides(config_in, opts);
  RunReport run;

  AssumptionReport report;
  json j;
  if (config.algorithm == ExperimentConfig::Algorithm::kTd0) {
    TdProblem problem = build_td(config.mdp, config.policy, FeatureMap::create(config.features));
    report = verify_td_assumptions(problem);
    j["algorithm"] = "td0";
    j["theta_star"] = std::vector<double>(problem.theta_star().begin(),
                                          problem.theta_star().end());
    j["L"] = problem.growth_constant();
    if (problem.noise_chain().chain.envelope) {
      j["envelope"] = envelope_to_json(*problem.noise_chain().chain.envelope);
    }
  } else {
    QProblem problem = build_q(config.mdp, config.policy,
                               QFeatureMap::create(config.features, config.mdp.n_states,
                                                   config.mdp.n_actions));
    report = verify_q_assumptions(problem);
    j["algorithm"] = "qlearning";
    j["theta_star"] = std::vector<double>(problem.theta_star().begin(),
                                          problem.theta_star().end());
    j["L"] = problem.growth_constant();
    j["c_est"] = problem.c_est();
    if (problem.noise_chain().chain.envelope) {
      j["envelope"] = envelope_to_json(*problem.noise_chain().chain.envelope);
    }
  }

  j["pass"] = report.pass;
  j["checks"] = json::array();
  for (const auto& check : report.checks) j["checks"].push_back(check_to_json(check));

  const std::string path = out_path(opts, "check_report.json");
  open_out(path) << j.dump(2) << "\n";
  run.emitted_files.push_back(path);
  run.pass = report.pass;
  run.exit_code = report.pass ? 0 : 2;
  run.summary = report.pass ? "all assumption checks passed"
                            : "one or more assumption checks failed";
  return run;
}

RunReport cmd_analyze(const ExperimentConfig& config_in, const CommandOptions& opts) {
  const ExperimentConfig config = apply_overrides(config_in, opts);
  BuiltProblem problem = build_problem(config);
  RunReport run;

  if (config.algorithm == ExperimentConfig::Algorithm::kQLearning && problem.c_est <= 0.0) {
    run.exit_code = 2;
    run.pass = false;
    run.summary = "sampling condition failed (c_est = " + format_g17(problem.c_est) +
                  "); bound pipeline unavailable";
    return run;
  }

  const BoundConstants constants =
      derive_constants(problem.cert, problem.L, problem.delta, problem.sigma_fn);

  json j = constants_to_json(constants, problem.cert);
  j["envelope"] = envelope_to_json(*problem.chain->envelope);
  const std::string path = out_path(opts, "constants.json");
  open_out(path) << j.dump(2) << "\n";
  run.emitted_files.push_back(path);

  std::cout << "constant        value\n";
  std::cout << "delta           " << format_g17(constants.delta) << "\n";
  std::cout << "T_star          " << constants.T_star << "\n";
  std::cout << "eps_delta       " << format_g17(constants.eps_delta) << "\n";
  std::cout << "L               " << format_g17(constants.L) << "\n";
  std::cout << "c1..c4          " << format_g17(problem.cert.c1) << " " << format_g17(problem.cert.c2)
            << " " << format_g17(problem.cert.c3) << " " << format_g17(problem.cert.c4) << "\n";
  std::cout << "c1'             " << format_g17(constants.c1p) << "\n";
  std::cout << "c2'             " << format_g17(constants.c2p) << "\n";
  std::cout << "c2''            " << format_g17(constants.c2pp) << "\n";
  std::cout << "c3'             " << format_g17(constants.c3p) << "\n";
  std::cout << "c4'             " << format_g17(constants.c4p) << "\n";
  std::cout << "c4''            " << format_g17(constants.c4pp) << "\n";
  std::cout << "c5'             " << format_g17(constants.c5p) << "\n";
  std::cout << "c6              " << format_g17(constants.c6) << "\n";

  run.summary = "constants derived (T* = " + std::to_string(constants.T_star) +
                ", eps_delta = " + format_g17(constants.eps_delta) + ")";
  return run;
}

RunReport cmd_simulate(const ExperimentConfig& config_in, const CommandOptions& opts) {
  const ExperimentConfig config = apply_overrides(config_in, opts);
  BuiltProblem problem = build_problem(config);
  const MseCurve curve = simulate_curve(config, problem, opts);

  RunReport run;
  const std::string path = out_path(opts, "mse.csv");
  auto stream = open_out(path);
  stream << "k,mse,stderr\n";
  for (std::size_t k = 0; k < curve.mean.size(); ++k) {
    stream << k << "," << format_g17(curve.mean[k]) << "," << format_g17(curve.std_error[k])
           << "\n";
  }
  run.emitted_files.push_back(path);
  run.summary = "simulated " + std::to_string(curve.n_trajectories) + " trajectories (" +
                std::to_string(curve.n_diverged) + " diverged)";
  return run;
}

RunReport cmd_bound(const ExperimentConfig& config_in, const CommandOptions& opts) {
  const ExperimentConfig config = apply_overrides(config_in, opts);
  BuiltProblem problem = build_problem(config);
  RunReport run;

  if (config.algorithm == ExperimentConfig::Algorithm::kQLearning && problem.c_est <= 0.0) {
    run.exit_code = 2;
    run.pass = false;
    run.summary = "sampling condition failed; bound pipeline unavailable";
    return run;
  }

  const BoundConstants constants =
      derive_constants(problem.cert, problem.L, problem.delta, problem.sigma_fn);
  const BoundCurve curve = bound_curve(constants, config.epsilon,
                                       problem.theta0_centered.norm(), config.horizon,
                                       problem.sigma_fn);

  const std::string path = out_path(opts, "bound.csv");
  auto stream = open_out(path);
  stream << "k,bound\n";
  for (std::size_t k = 0; k < curve.values.size(); ++k) {
    stream << k << "," << format_g17(curve.values[k]) << "\n";
  }
  run.emitted_files.push_back(path);
  run.summary = "bound curve emitted (k_eps = " + std::to_string(curve.k_eps) + ")";
  return run;
}

RunReport cmd_compare(const ExperimentConfig& config_in, const CommandOptions& opts) {
  const ExperimentConfig config = apply_overrides(config_in, opts);
  BuiltProblem problem = build_problem(config);
  RunReport run;

  if (config.algorithm == ExperimentConfig::Algorithm::kQLearning && problem.c_est <= 0.0) {
    run.exit_code = 2;
    run.pass = false;
    run.summary = "sampling condition failed; bound pipeline unavailable";
    return run;
  }

  const BoundConstants constants =
      derive_constants(problem.cert, problem.L, problem.delta, problem.sigma_fn);
  const BoundCurve bounds = bound_curve(constants, config.epsilon,
                                        problem.theta0_centered.norm(), config.horizon,
                                        problem.sigma_fn);
  const MseCurve mse = simulate_curve(config, problem, opts);

  const long first_violation = first_domination_violation(mse, bounds.values);
  const std::string path = out_path(opts, "compare.csv");
  auto stream = open_out(path);
  stream << "k,mse,stderr,bound,dominated\n";
  for (std::size_t k = 0; k < mse.mean.size(); ++k) {
    const bool dominated = mse.mean[k] + 3.0 * mse.std_error[k] <= bounds.values[k];
    stream << k << "," << format_g17(mse.mean[k]) << "," << format_g17(mse.std_error[k]) << ","
           << format_g17(bounds.values[k]) << "," << (dominated ? 1 : 0) << "\n";
  }
  run.emitted_files.push_back(path);

  if (first_violation >= 0) {
    run.pass = false;
    run.exit_code = 2;
    run.summary = "bound violated: first violation at k = " + std::to_string(first_violation);
  } else {
    run.summary = "mse + 3 stderr dominated by the bound at every k";
  }
  return run;
}

}  // namespace salab
