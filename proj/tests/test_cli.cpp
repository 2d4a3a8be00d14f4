#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "salab/commands.hpp"

using namespace salab;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream stream(path);
  stream << body;
  return path.string();
}

const char* kReferenceConfig = R"({
  "algorithm": "td0",
  "mdp": {
    "n_states": 2,
    "n_actions": 1,
    "transitions": [[[0.9, 0.1], [0.2, 0.8]]],
    "rewards": [[1.0], [0.5]],
    "gamma": 0.5
  },
  "policy": [[1.0], [1.0]],
  "features": [[1.0, 0.0], [0.0, 1.0]],
  "epsilon": 0.01,
  "horizon": 120,
  "trajectories": 64,
  "master_seed": 42,
  "initial_noise": {"kind": "point", "state": 0},
  "theta0": [0.0, 0.0]
})";

std::string slurp(const std::string& path) {
  std::ifstream stream(path, std::ios::binary);
  std::ostringstream out;
  out << stream.rdbuf();
  return out.str();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const SaError& e) {
    return e.code();
  }
  FAIL("expected an SaError");
  return ErrorCode::ValidationError;
}

}  // namespace

TEST_CASE("load_config") {
  SUBCASE("minimal single-state config loads") {
    const std::string path = write_temp("salab_min.json", R"({
      "algorithm": "td0",
      "mdp": {"n_states": 1, "n_actions": 1, "transitions": [[[1.0]]],
              "rewards": [[0.5]], "gamma": 0.0},
      "policy": [[1.0]],
      "features": [[1.0]],
      "epsilon": 0.1,
      "horizon": 10,
      "trajectories": 4,
      "master_seed": 1
    })");
    const ExperimentConfig config = load_config(path);
    CHECK(config.mdp.n_states == 1);
    CHECK(config.mdp.r_bar == 0.5);
    CHECK_FALSE(config.theta0.has_value());
  }

  SUBCASE("bad transition row is named") {
    const std::string path = write_temp("salab_badrow.json", R"({
      "algorithm": "td0",
      "mdp": {"n_states": 2, "n_actions": 1,
              "transitions": [[[0.5, 0.4], [0.5, 0.5]]],
              "rewards": [[0.0], [0.0]], "gamma": 0.5},
      "policy": [[1.0], [1.0]],
      "features": [[1.0, 0.0], [0.0, 1.0]],
      "epsilon": 0.1, "horizon": 10, "trajectories": 4, "master_seed": 1
    })");
    CHECK(code_of([&] { load_config(path); }) == ErrorCode::ValidationError);
    try {
      load_config(path);
    } catch (const SaError& e) {
      CHECK(std::string(e.what()).find("row 0") != std::string::npos);
    }
  }

  SUBCASE("gamma = 1 rejected") {
    const std::string path = write_temp("salab_gamma.json", R"({
      "algorithm": "td0",
      "mdp": {"n_states": 1, "n_actions": 1, "transitions": [[[1.0]]],
              "rewards": [[0.0]], "gamma": 1.0},
      "policy": [[1.0]],
      "features": [[1.0]],
      "epsilon": 0.1, "horizon": 10, "trajectories": 4, "master_seed": 1
    })");
    CHECK(code_of([&] { load_config(path); }) == ErrorCode::ValidationError);
    try {
      load_config(path);
    } catch (const SaError& e) {
      CHECK(std::string(e.what()).find("discount factor") != std::string::npos);
    }
  }

  SUBCASE("malformed JSON is a parse error") {
    const std::string path = write_temp("salab_broken.json", "{\"algorithm\": ");
    CHECK(code_of([&] { load_config(path); }) == ErrorCode::ParseError);
  }

  SUBCASE("missing field is named") {
    const std::string path = write_temp("salab_missing.json", R"({"algorithm": "td0"})");
    try {
      load_config(path);
    } catch (const SaError& e) {
      CHECK(std::string(e.what()).find("mdp") != std::string::npos);
    }
  }
}

TEST_CASE("command reproducibility") {
  const std::string config_path = write_temp("salab_ref.json", kReferenceConfig);
  const ExperimentConfig config = load_config(config_path);

  const auto out_a = std::filesystem::temp_directory_path() / "salab_out_a";
  const auto out_b = std::filesystem::temp_directory_path() / "salab_out_b";
  std::filesystem::remove_all(out_a);
  std::filesystem::remove_all(out_b);

  SUBCASE("simulate twice, byte-identical") {
    CommandOptions opts_a;
    opts_a.out_dir = out_a.string();
    CommandOptions opts_b;
    opts_b.out_dir = out_b.string();
    cmd_simulate(config, opts_a);
    cmd_simulate(config, opts_b);
    CHECK(slurp((out_a / "mse.csv").string()) == slurp((out_b / "mse.csv").string()));
  }

  SUBCASE("simulate across worker counts, byte-identical") {
    CommandOptions opts_a;
    opts_a.out_dir = out_a.string();
    CommandOptions opts_b;
    opts_b.out_dir = out_b.string();
    setenv("SA_LAB_THREADS", "1", 1);
    cmd_simulate(config, opts_a);
    setenv("SA_LAB_THREADS", "7", 1);
    cmd_simulate(config, opts_b);
    unsetenv("SA_LAB_THREADS");
    CHECK(slurp((out_a / "mse.csv").string()) == slurp((out_b / "mse.csv").string()));
  }

  SUBCASE("check and analyze emit stable reports") {
    CommandOptions opts_a;
    opts_a.out_dir = out_a.string();
    CommandOptions opts_b;
    opts_b.out_dir = out_b.string();
    CHECK(cmd_check(config, opts_a).exit_code == 0);
    CHECK(cmd_check(config, opts_b).exit_code == 0);
    CHECK(slurp((out_a / "check_report.json").string()) ==
          slurp((out_b / "check_report.json").string()));
    cmd_analyze(config, opts_a);
    cmd_analyze(config, opts_b);
    CHECK(slurp((out_a / "constants.json").string()) ==
          slurp((out_b / "constants.json").string()));
  }

  SUBCASE("seed override changes the curve") {
    CommandOptions opts_a;
    opts_a.out_dir = out_a.string();
    CommandOptions opts_b;
    opts_b.out_dir = out_b.string();
    opts_b.seed_override = 43;
    cmd_simulate(config, opts_a);
    cmd_simulate(config, opts_b);
    CHECK(slurp((out_a / "mse.csv").string()) != slurp((out_b / "mse.csv").string()));
  }
}

TEST_CASE("bound and compare behavior") {
  const std::string config_path = write_temp("salab_ref2.json", kReferenceConfig);
  ExperimentConfig config = load_config(config_path);

  SUBCASE("stepsize above eps_delta is rejected with exit code 2") {
    CommandOptions opts;
    opts.out_dir = (std::filesystem::temp_directory_path() / "salab_out_c").string();
    try {
      cmd_bound(config, opts);
      FAIL("expected StepsizeTooLarge");
    } catch (const SaError& e) {
      CHECK(e.code() == ErrorCode::StepsizeTooLarge);
      CHECK(exit_code_for(e.code()) == 2);
    }
  }

  SUBCASE("valid stepsize dominates and reruns byte-identically") {
    config.epsilon = 2e-8;  // below the reference instance's eps_delta
    config.horizon = 60;
    const auto out_a = std::filesystem::temp_directory_path() / "salab_out_d";
    const auto out_b = std::filesystem::temp_directory_path() / "salab_out_e";
    std::filesystem::remove_all(out_a);
    std::filesystem::remove_all(out_b);
    CommandOptions opts_a;
    opts_a.out_dir = out_a.string();
    CommandOptions opts_b;
    opts_b.out_dir = out_b.string();
    const RunReport a = cmd_compare(config, opts_a);
    const RunReport b = cmd_compare(config, opts_b);
    CHECK(a.exit_code == 0);
    CHECK(a.pass);
    CHECK(slurp((out_a / "compare.csv").string()) == slurp((out_b / "compare.csv").string()));

    // The dominated column is the exact 3-sigma rule.
    const std::string body = slurp((out_a / "compare.csv").string());
    std::istringstream lines(body);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "k,mse,stderr,bound,dominated");
    while (std::getline(lines, line)) {
      CHECK(line.back() == '1');
    }
  }
}

TEST_CASE("domination checker flags corrupted bounds") {
  MseCurve mse;
  mse.mean = {1.0, 0.9, 0.8};
  mse.std_error = {0.01, 0.01, 0.01};
  CHECK(first_domination_violation(mse, {2.0, 2.0, 2.0}) == -1);
  // A sign-corrupted bound fails immediately at k = 0.
  CHECK(first_domination_violation(mse, {-2.0, -2.0, -2.0}) == 0);
  CHECK(first_domination_violation(mse, {2.0, 0.5, 2.0}) == 1);
  CHECK_THROWS_AS(first_domination_violation(mse, {1.0}), SaError);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ErrorCode::ParseError) == 1);
  CHECK(exit_code_for(ErrorCode::ValidationError) == 1);
  CHECK(exit_code_for(ErrorCode::NonFiniteIterate) == 3);
  CHECK(exit_code_for(ErrorCode::NoConvergence) == 3);
  CHECK(exit_code_for(ErrorCode::StepsizeTooLarge) == 2);
  CHECK(exit_code_for(ErrorCode::NotIrreducible) == 2);
}
