#pragma once

#include <memory>
#include <string>
#include <vector>

#include "salab/step_map.hpp"

namespace salab {

// State features, one row per state; full column rank, rows of norm <= 1.
struct FeatureMap {
  MatrixXd phi;  // |S| x d

  static FeatureMap create(MatrixXd phi);

  int dim() const { return static_cast<int>(phi.cols()); }
};

struct AssumptionCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool pass = false;
};

// TD(0) with linear features as a centered step map driven by the lifted
// (s,u,s') chain. Mean dynamics are theta_dot = A theta with
// A = Phi^T D (gamma P - I) Phi and equilibrium theta* = -A^{-1} b.
class TdProblem : public StepMap {
 public:
  int dim() const override { return static_cast<int>(A_.rows()); }
  int alphabet_size() const override { return chain_->size(); }
  void f(const VectorXd& theta, int x, VectorXd& out) const override;
  VectorXd f_bar(const VectorXd& theta) const override { return A_ * theta; }
  double growth_constant() const override { return L_; }
  const VectorXd& theta_star() const override { return theta_star_; }

  const MatrixXd& A() const { return A_; }
  const VectorXd& b() const { return b_; }
  double gamma() const { return gamma_; }
  double r_bar() const { return r_bar_; }
  const FeatureMap& features() const { return features_; }
  const LiftedChain& noise_chain() const { return *chain_; }
  std::shared_ptr<const LiftedChain> noise_chain_ptr() const { return chain_; }
  std::shared_ptr<const ChainModel> chain_model_ptr() const {
    return {chain_, &chain_->chain};
  }

  friend TdProblem build_td(const Mdp& mdp, const Policy& policy, const FeatureMap& features,
                            int envelope_horizon);

 private:
  MatrixXd A_;
  VectorXd b_;
  VectorXd theta_star_;
  double L_ = 0.0;
  double gamma_ = 0.0;
  double r_bar_ = 0.0;
  FeatureMap features_;
  std::shared_ptr<const LiftedChain> chain_;
  // Cached per lifted state: phi(s), a_x = gamma phi(s') - phi(s), and the
  // scalar offset r + a_x . theta*.
  MatrixXd phi_s_;   // d x |X|
  MatrixXd coeff_;   // d x |X|
  VectorXd offset_;  // |X|
};

// Builds A, b, theta*, the declared L, and the lifted noise chain.
// Throws NotHurwitz when the feature/chain combination is unstable.
TdProblem build_td(const Mdp& mdp, const Policy& policy, const FeatureMap& features,
                   int envelope_horizon = kDefaultEnvelopeHorizon);

// Centered TD(0) update direction for an observed transition (s, s') with
// reward r: phi(s)[gamma phi(s') - phi(s)]^T (theta + theta*) + r phi(s).
VectorXd td_f(const FeatureMap& features, double gamma, const VectorXd& theta_star,
              const VectorXd& theta_centered, int s, int s_next, double reward);

// Declared growth constant: max over every bound the analysis uses,
// max(2, r_bar + 2||theta*||, 1 + gamma, r_bar).
double td_L(double r_bar, double theta_star_norm, double gamma);

// Checks negative definiteness of A, feature rank and norms, the sampled
// Lipschitz/growth bounds, chain regularity, and the ergodic-bias envelope.
AssumptionReport verify_td_assumptions(const TdProblem& problem);

}  // namespace salab
