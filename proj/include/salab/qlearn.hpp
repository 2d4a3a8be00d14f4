#pragma once

#include <memory>
#include <vector>

#include "salab/step_map.hpp"
#include "salab/td.hpp"

namespace salab {

// State-action features in canonical (s,u) order: row index s * |U| + u.
// Full column rank, rows of norm <= 1.
struct QFeatureMap {
  MatrixXd psi;  // (|S| |U|) x d
  int n_states = 0;
  int n_actions = 0;

  static QFeatureMap create(MatrixXd psi, int n_states, int n_actions);

  int dim() const { return static_cast<int>(psi.cols()); }
  int row(int s, int u) const { return s * n_actions + u; }
};

// Q-learning with linear features as a centered step map on the lifted
// (s,u,s') chain. The expected update F_bar(theta) = E_mu[F(theta,X)] is a
// finite sum over the lifted stationary distribution; theta* is its root.
class QProblem : public StepMap {
 public:
  int dim() const override { return features_.dim(); }
  int alphabet_size() const override { return chain_->size(); }
  void f(const VectorXd& theta, int x, VectorXd& out) const override;
  VectorXd f_bar(const VectorXd& theta) const override;
  double growth_constant() const override { return L_; }
  const VectorXd& theta_star() const override { return theta_star_; }

  double c_est() const { return c_est_; }
  int c_est_samples() const { return c_est_samples_; }
  double gamma() const { return gamma_; }
  double r_bar() const { return r_bar_; }
  const QFeatureMap& features() const { return features_; }
  const LiftedChain& noise_chain() const { return *chain_; }
  std::shared_ptr<const LiftedChain> noise_chain_ptr() const { return chain_; }
  std::shared_ptr<const ChainModel> chain_model_ptr() const {
    return {chain_, &chain_->chain};
  }

  // Uncentered expected update evaluated through the cached lifted chain.
  VectorXd expected_update(const VectorXd& theta) const;

  friend QProblem build_q(const Mdp& mdp, const Policy& policy, const QFeatureMap& features,
                          double fp_tol, long fp_max_iter, int n_sphere, std::uint64_t seed,
                          int envelope_horizon);

 private:
  VectorXd theta_star_;
  double L_ = 0.0;
  double c_est_ = 0.0;
  int c_est_samples_ = 0;
  double gamma_ = 0.0;
  double r_bar_ = 0.0;
  QFeatureMap features_;
  std::shared_ptr<const LiftedChain> chain_;
  MatrixXd psi_su_;        // d x |X|, features of the visited pair
  std::vector<int> next_state_;  // s' per lifted state
};

// Centered update direction for an observed (s,u,s') transition:
// psi(s,u)[r + gamma max_u' psi(s',u')^T (theta+theta*) - psi(s,u)^T (theta+theta*)].
// Argmax ties break toward the lowest action index.
VectorXd q_f(const QFeatureMap& features, double gamma, const VectorXd& theta_star,
             const VectorXd& theta_centered, int s, int u, int s_next, double reward);

// Exact expected update F_bar(theta) = sum_x mu_X(x) F(theta, x) over the
// lifted stationary distribution (uncentered theta).
VectorXd expected_update(const VectorXd& theta, const Mdp& mdp, const Policy& policy,
                         const QFeatureMap& features);

// Damped deterministic iteration theta <- theta + alpha F_bar(theta) down to
// ||F_bar|| <= tol; alpha shrinks on residual increase.
// Throws NoConvergence after max_iter evaluations.
VectorXd solve_q_fixed_point(const Mdp& mdp, const Policy& policy, const QFeatureMap& features,
                             double tol = 1e-10, long max_iter = 1000000);

// Left side of the sampling condition at a single direction (exact finite
// sum over the lifted stationary distribution):
//   gamma^2 E_mu[max_u' (psi(s',u')^T theta)^2] - E_mu[(psi(s,u)^T theta)^2].
double sampling_condition_value(const Mdp& mdp, const Policy& policy,
                                const QFeatureMap& features, const VectorXd& theta);

// Sampled estimate of the sampling-condition constant: the negated maximum of
// sampling_condition_value over unit directions. Uses deterministic
// low-discrepancy points, random points, and a region-eigenvector refinement;
// exact for single-action models (one region). Nonpositive values flag a
// failed condition.
double check_sampling_condition(const Mdp& mdp, const Policy& policy,
                                const QFeatureMap& features, int n_sphere, std::uint64_t seed);

// Declared growth constant max(gamma + 1, r_bar + (gamma + 1) ||theta*||).
double q_L(double r_bar, double theta_star_norm, double gamma);

// Sampled Lipschitz/growth checks, the sampling condition, chain regularity,
// the ergodic-bias envelope, and the fixed-point residual.
AssumptionReport verify_q_assumptions(const QProblem& problem);

QProblem build_q(const Mdp& mdp, const Policy& policy, const QFeatureMap& features,
                 double fp_tol = 1e-10, long fp_max_iter = 1000000, int n_sphere = 512,
                 std::uint64_t seed = 0x9a51ab00c0ffeeULL,
                 int envelope_horizon = kDefaultEnvelopeHorizon);

}  // namespace salab
