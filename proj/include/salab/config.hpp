#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "salab/mdp.hpp"
#include "salab/step_map.hpp"

namespace salab {

// One experiment: an MDP, a sampling policy, features, the algorithm, and the
// simulation / bound parameters. Loaded from a JSON document; matrices are
// nested row-major arrays.
struct ExperimentConfig {
  enum class Algorithm { kTd0, kQLearning };

  Algorithm algorithm = Algorithm::kTd0;
  Mdp mdp;
  Policy policy;
  MatrixXd features;  // Phi (|S| x d) for td0, Psi (|S||U| x d) for qlearning
  double epsilon = 0.0;
  std::optional<double> delta;       // default: half of the admissible c3/c4
  std::optional<MatrixXd> q_matrix;  // default: identity
  int horizon = 0;                   // K
  int trajectories = 0;              // N
  std::uint64_t master_seed = 0;
  InitialDistribution initial_noise = InitialDistribution::kPointMass;
  int initial_state = 0;
  std::optional<VectorXd> theta0;  // original coordinates; default: zero vector
};

// Parses and validates a config file. Throws ParseError for malformed JSON
// and ValidationError naming the offending field otherwise.
ExperimentConfig load_config(const std::string& path);

}  // namespace salab
