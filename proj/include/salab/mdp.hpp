#pragma once

#include <Eigen/Dense>
#include <vector>

#include "salab/errors.hpp"

namespace salab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Finite MDP: one row-stochastic transition matrix per action, reward table
// R(s,u), discount factor gamma in [0,1).
struct Mdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<MatrixXd> transitions;  // per action, n_states x n_states
  MatrixXd rewards;                   // n_states x n_actions
  double gamma = 0.0;
  double r_bar = 0.0;                 // max_{s,u} |R(s,u)|

  // Validates row-stochasticity (1e-12), nonnegativity, gamma in [0,1).
  static Mdp create(std::vector<MatrixXd> transitions, MatrixXd rewards, double gamma);
};

// Stochastic policy pi(u|s), rows sum to 1.
struct Policy {
  MatrixXd probs;  // n_states x n_actions

  static Policy create(MatrixXd probs);

  // Deterministic policy as a point mass per state.
  static Policy deterministic(int n_states, int n_actions, const std::vector<int>& actions);
};

}  // namespace salab
