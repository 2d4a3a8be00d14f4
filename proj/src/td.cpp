#include "salab/td.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "salab/sa_core.hpp"

namespace salab {

FeatureMap FeatureMap::create(MatrixXd phi) {
  if (phi.rows() < 1 || phi.cols() < 1) {
    fail(ErrorCode::ValidationError, "feature matrix must be non-empty");
  }
  if (!phi.allFinite()) fail(ErrorCode::ValidationError, "features contain non-finite entries");
  for (int s = 0; s < phi.rows(); ++s) {
    if (phi.row(s).norm() > 1.0 + 1e-12) {
      fail(ErrorCode::ValidationError,
           "feature vector of state " + std::to_string(s) + " has norm > 1");
    }
  }
  Eigen::JacobiSVD<MatrixXd> svd(phi);
  if (svd.singularValues().minCoeff() <= 1e-10) {
    fail(ErrorCode::ValidationError, "feature matrix is rank deficient");
  }
  FeatureMap features;
  features.phi = std::move(phi);
  return features;
}

void TdProblem::f(const VectorXd& theta, int x, VectorXd& out) const {
  out = phi_s_.col(x) * (coeff_.col(x).dot(theta) + offset_(x));
}

TdProblem build_td(const Mdp& mdp, const Policy& policy, const FeatureMap& features,
                   int envelope_horizon) {
  if (features.phi.rows() != mdp.n_states) {
    fail(ErrorCode::DimensionMismatch, "features must have one row per state");
  }

  auto lifted = std::make_shared<LiftedChain>(lift_chain(mdp, policy, envelope_horizon));

  // State chain quantities: P^pi rows and the stationary distribution mu
  // recovered by marginalizing the lifted stationary mass.
  MatrixXd P_pi = MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int u = 0; u < mdp.n_actions; ++u) {
    P_pi += policy.probs.col(u).asDiagonal() * mdp.transitions[u];
  }
  VectorXd mu = VectorXd::Zero(mdp.n_states);
  for (int i = 0; i < lifted->size(); ++i) {
    mu(lifted->states[i][0]) += lifted->chain.stationary(i);
  }

  // R^pi(s) = sum_u pi(u|s) R(s,u).
  VectorXd r_pi = (policy.probs.array() * mdp.rewards.array()).rowwise().sum();

  const MatrixXd& phi = features.phi;
  MatrixXd A = phi.transpose() * mu.asDiagonal() * (mdp.gamma * P_pi - MatrixXd::Identity(mdp.n_states, mdp.n_states)) * phi;
  VectorXd b = phi.transpose() * mu.asDiagonal() * r_pi;

  Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
  double max_real = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < A.rows(); ++i) max_real = std::max(max_real, es.eigenvalues()[i].real());
  if (!(max_real < -1e-12)) {
    fail(ErrorCode::NotHurwitz, "TD mean matrix A is not Hurwitz (max real part " +
                                    std::to_string(max_real) + ")");
  }

  TdProblem problem;
  problem.A_ = A;
  problem.b_ = b;
  problem.theta_star_ = A.fullPivLu().solve(-b);
  problem.L_ = td_L(mdp.r_bar, problem.theta_star_.norm(), mdp.gamma);
  problem.gamma_ = mdp.gamma;
  problem.r_bar_ = mdp.r_bar;
  problem.features_ = features;
  problem.chain_ = lifted;

  const int nx = lifted->size();
  const int d = features.dim();
  problem.phi_s_.resize(d, nx);
  problem.coeff_.resize(d, nx);
  problem.offset_.resize(nx);
  for (int x = 0; x < nx; ++x) {
    const auto [s, u, sp] = lifted->states[x];
    problem.phi_s_.col(x) = phi.row(s).transpose();
    problem.coeff_.col(x) = mdp.gamma * phi.row(sp).transpose() - phi.row(s).transpose();
    problem.offset_(x) = lifted->rewards[x] + problem.coeff_.col(x).dot(problem.theta_star_);
  }
  return problem;
}

VectorXd td_f(const FeatureMap& features, double gamma, const VectorXd& theta_star,
              const VectorXd& theta_centered, int s, int s_next, double reward) {
  const VectorXd coeff = gamma * features.phi.row(s_next).transpose() -
                         features.phi.row(s).transpose();
  return features.phi.row(s).transpose() *
         (coeff.dot(theta_centered) + reward + coeff.dot(theta_star));
}

double td_L(double r_bar, double theta_star_norm, double gamma) {
  if (r_bar < 0.0 || theta_star_norm < 0.0 || !(gamma >= 0.0 && gamma < 1.0)) {
    fail(ErrorCode::ValidationError, "td_L needs nonnegative inputs and gamma in [0,1)");
  }
  return std::max({2.0, r_bar + 2.0 * theta_star_norm, 1.0 + gamma, r_bar});
}

AssumptionReport verify_td_assumptions(const TdProblem& problem) {
  AssumptionReport report;

  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(
        0.5 * (problem.A() + problem.A().transpose()));
    const double lmax = es.eigenvalues().maxCoeff();
    report.checks.push_back({"A_negative_definite", lmax < 0.0, lmax,
                             "largest eigenvalue of the symmetric part"});
  }
  {
    Eigen::JacobiSVD<MatrixXd> svd(problem.features().phi);
    const double smin = svd.singularValues().minCoeff();
    report.checks.push_back({"feature_rank", smin > 1e-10, smin, "smallest singular value"});
    double max_norm = 0.0;
    for (int s = 0; s < problem.features().phi.rows(); ++s) {
      max_norm = std::max(max_norm, problem.features().phi.row(s).norm());
    }
    report.checks.push_back(
        {"feature_norms", max_norm <= 1.0 + 1e-12, max_norm, "largest feature norm"});
  }
  {
    const double residual = (problem.A() * problem.theta_star() + problem.b()).norm();
    report.checks.push_back(
        {"equilibrium_residual", residual <= 1e-10, residual, "||A theta* + b||"});
  }
  {
    const auto lg = check_lipschitz_growth(problem, 200, 4.0 * (problem.theta_star().norm() + 1.0),
                                           0x7d5a1ab5eedULL);
    report.checks.push_back({"lipschitz_bound", lg.pass, lg.lipschitz_estimate,
                             "sampled Lipschitz ratio vs declared L = " +
                                 std::to_string(problem.growth_constant())});
    report.checks.push_back({"growth_bound", lg.pass, lg.growth_estimate,
                             "sampled growth ratio vs declared L"});
  }
  {
    const ChainModel& chain = problem.noise_chain().chain;
    report.checks.push_back({"chain_irreducible", chain.irreducible,
                             static_cast<double>(chain.irreducible), "lifted chain"});
    report.checks.push_back({"chain_aperiodic", chain.aperiodic,
                             static_cast<double>(chain.period), "period of the lifted chain"});
    if (chain.irreducible && chain.aperiodic && chain.envelope) {
      // Ergodic-bias certification on a sampled grid of directions.
      std::vector<VectorXd> thetas;
      Rng rng(0x5eedf00dULL);
      for (int i = 0; i < 24; ++i) {
        VectorXd v(problem.dim());
        for (int j = 0; j < problem.dim(); ++j) v(j) = rng.gaussian();
        v.normalize();
        thetas.push_back(i % 3 == 0 ? VectorXd(3.0 * v) : v);
      }
      thetas.push_back(VectorXd::Zero(problem.dim()));
      const auto cert = certify_ergodic_bias(problem, chain, thetas, 30, 10);
      report.checks.push_back({"ergodic_bias_envelope", cert.pass, cert.worst_margin,
                               std::to_string(cert.n_checked) + " windows checked"});
    } else {
      report.checks.push_back({"ergodic_bias_envelope", false, 0.0,
                               "no mixing envelope (chain not irreducible/aperiodic)"});
    }
  }

  report.pass = true;
  for (const auto& check : report.checks) report.pass = report.pass && check.pass;
  return report;
}

}  // namespace salab
