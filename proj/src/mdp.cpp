#include "salab/mdp.hpp"

#include <cmath>
#include <string>

namespace salab {
namespace {

constexpr double kRowSumTol = 1e-12;

void check_row_stochastic(const MatrixXd& m, const std::string& what) {
  for (int r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!std::isfinite(v) || v < 0.0) {
        fail(ErrorCode::ValidationError,
             what + " row " + std::to_string(r) + " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      fail(ErrorCode::ValidationError, what + " row " + std::to_string(r) + " sums to " +
                                           std::to_string(sum) + ", expected 1");
    }
  }
}

}  // namespace

Mdp Mdp::create(std::vector<MatrixXd> transitions, MatrixXd rewards, double gamma) {
  if (transitions.empty()) fail(ErrorCode::ValidationError, "mdp needs at least one action");
  const int n = static_cast<int>(transitions[0].rows());
  const int m = static_cast<int>(transitions.size());
  if (n < 1) fail(ErrorCode::ValidationError, "mdp needs at least one state");
  for (int u = 0; u < m; ++u) {
    if (transitions[u].rows() != n || transitions[u].cols() != n) {
      fail(ErrorCode::DimensionMismatch,
           "transition matrix for action " + std::to_string(u) + " is not " +
               std::to_string(n) + "x" + std::to_string(n));
    }
    check_row_stochastic(transitions[u], "P^" + std::to_string(u));
  }
  if (rewards.rows() != n || rewards.cols() != m) {
    fail(ErrorCode::DimensionMismatch, "rewards must be n_states x n_actions");
  }
  if (!rewards.allFinite()) fail(ErrorCode::ValidationError, "rewards contain non-finite entries");
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    fail(ErrorCode::ValidationError, "discount factor gamma must lie in [0,1)");
  }

  Mdp mdp;
  mdp.n_states = n;
  mdp.n_actions = m;
  mdp.transitions = std::move(transitions);
  mdp.rewards = std::move(rewards);
  mdp.gamma = gamma;
  mdp.r_bar = mdp.rewards.cwiseAbs().maxCoeff();
  return mdp;
}

Policy Policy::create(MatrixXd probs) {
  check_row_stochastic(probs, "policy");
  Policy policy;
  policy.probs = std::move(probs);
  return policy;
}

Policy Policy::deterministic(int n_states, int n_actions, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != n_states) {
    fail(ErrorCode::DimensionMismatch, "deterministic policy needs one action per state");
  }
  MatrixXd probs = MatrixXd::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) {
      fail(ErrorCode::ValidationError, "action index out of range at state " + std::to_string(s));
    }
    probs(s, actions[s]) = 1.0;
  }
  return Policy::create(std::move(probs));
}

}  // namespace salab
