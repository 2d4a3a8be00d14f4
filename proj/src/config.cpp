#include "salab/config.hpp"

#include <fstream>

#include <json.hpp>

namespace salab {
namespace {

using nlohmann::json;

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) {
    fail(ErrorCode::ValidationError, std::string("missing required field '") + field + "'");
  }
  return *it;
}

MatrixXd parse_matrix(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    fail(ErrorCode::ValidationError, name + " must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      fail(ErrorCode::ValidationError,
           name + " row " + std::to_string(r) + " has inconsistent length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        fail(ErrorCode::ValidationError, name + "[" + std::to_string(r) + "][" +
                                             std::to_string(c) + "] is not a number");
      }
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

VectorXd parse_vector(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) {
    fail(ErrorCode::ValidationError, name + " must be a non-empty array");
  }
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      fail(ErrorCode::ValidationError, name + "[" + std::to_string(i) + "] is not a number");
    }
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream stream(path);
  if (!stream) fail(ErrorCode::ParseError, "cannot open config file '" + path + "'");

  json doc;
  try {
    doc = json::parse(stream);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, e.what());
  }

  ExperimentConfig config;

  const std::string algorithm = require(doc, "algorithm").get<std::string>();
  if (algorithm == "td0") {
    config.algorithm = ExperimentConfig::Algorithm::kTd0;
  } else if (algorithm == "qlearning") {
    config.algorithm = ExperimentConfig::Algorithm::kQLearning;
  } else {
    fail(ErrorCode::ValidationError, "algorithm must be 'td0' or 'qlearning'");
  }

  const json& jm = require(doc, "mdp");
  const int n_states = require(jm, "n_states").get<int>();
  const int n_actions = require(jm, "n_actions").get<int>();
  const json& jt = require(jm, "transitions");
  if (!jt.is_array() || static_cast<int>(jt.size()) != n_actions) {
    fail(ErrorCode::ValidationError, "mdp.transitions must hold one matrix per action");
  }
  std::vector<MatrixXd> transitions;
  transitions.reserve(n_actions);
  for (int u = 0; u < n_actions; ++u) {
    transitions.push_back(parse_matrix(jt[u], "mdp.transitions[" + std::to_string(u) + "]"));
    if (transitions.back().rows() != n_states || transitions.back().cols() != n_states) {
      fail(ErrorCode::ValidationError,
           "mdp.transitions[" + std::to_string(u) + "] must be n_states x n_states");
    }
  }
  MatrixXd rewards = parse_matrix(require(jm, "rewards"), "mdp.rewards");
  const double gamma = require(jm, "gamma").get<double>();
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    fail(ErrorCode::ValidationError, "mdp.gamma: discount factor must lie in [0,1)");
  }
  config.mdp = Mdp::create(std::move(transitions), std::move(rewards), gamma);

  config.policy = Policy::create(parse_matrix(require(doc, "policy"), "policy"));
  if (config.policy.probs.rows() != n_states || config.policy.probs.cols() != n_actions) {
    fail(ErrorCode::ValidationError, "policy must be n_states x n_actions");
  }

  config.features = parse_matrix(require(doc, "features"), "features");
  const long expected_rows = config.algorithm == ExperimentConfig::Algorithm::kTd0
                                 ? n_states
                                 : static_cast<long>(n_states) * n_actions;
  if (config.features.rows() != expected_rows) {
    fail(ErrorCode::ValidationError, "features must have " + std::to_string(expected_rows) +
                                         " rows for this algorithm");
  }

  config.epsilon = require(doc, "epsilon").get<double>();
  if (!(config.epsilon > 0.0)) fail(ErrorCode::ValidationError, "epsilon must be positive");

  if (doc.contains("delta") && !doc["delta"].is_null()) {
    config.delta = doc["delta"].get<double>();
    if (!(*config.delta > 0.0)) fail(ErrorCode::ValidationError, "delta must be positive");
  }
  if (doc.contains("q_matrix") && !doc["q_matrix"].is_null()) {
    config.q_matrix = parse_matrix(doc["q_matrix"], "q_matrix");
  }

  config.horizon = require(doc, "horizon").get<int>();
  if (config.horizon < 1) fail(ErrorCode::ValidationError, "horizon must be >= 1");
  config.trajectories = require(doc, "trajectories").get<int>();
  if (config.trajectories < 2) fail(ErrorCode::ValidationError, "trajectories must be >= 2");
  config.master_seed = require(doc, "master_seed").get<std::uint64_t>();

  if (doc.contains("initial_noise") && !doc["initial_noise"].is_null()) {
    const json& jn = doc["initial_noise"];
    const std::string kind = require(jn, "kind").get<std::string>();
    if (kind == "point") {
      config.initial_noise = InitialDistribution::kPointMass;
      config.initial_state = jn.contains("state") ? jn["state"].get<int>() : 0;
    } else if (kind == "uniform") {
      config.initial_noise = InitialDistribution::kUniform;
    } else if (kind == "stationary") {
      config.initial_noise = InitialDistribution::kStationary;
    } else {
      fail(ErrorCode::ValidationError, "initial_noise.kind must be point, uniform, or stationary");
    }
  }

  if (doc.contains("theta0") && !doc["theta0"].is_null()) {
    config.theta0 = parse_vector(doc["theta0"], "theta0");
    if (config.theta0->size() != config.features.cols()) {
      fail(ErrorCode::ValidationError, "theta0 length must match the feature dimension");
    }
  }

  return config;
}

}  // namespace salab
