#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "salab/mdp.hpp"

namespace salab {

constexpr int kDefaultEnvelopeHorizon = 200;
constexpr double kEnvelopeFloor = 1e-14;  // curve below this is rounding noise

struct IrreducibilityReport {
  bool irreducible = false;
  bool aperiodic = false;
  int period = 0;
};

// Certified geometric bound on worst-case total-variation distance to the
// stationary distribution: d_k <= c0 * eta^k for every computed k, including
// k = 0 (a point mass is at distance 1 - min(mu) from mu).
struct MixingEnvelope {
  double c0 = 0.0;
  double eta = 0.0;
  std::vector<double> tv_curve;  // tv_curve[k-1] = d_k for k = 1..horizon_used
};

// A finite Markov chain (either the induced state chain or a lifted chain)
// with its stationary distribution, structural flags, and mixing envelope.
struct ChainModel {
  MatrixXd transition;
  VectorXd stationary;
  bool irreducible = false;
  bool aperiodic = false;
  int period = 0;
  std::optional<MixingEnvelope> envelope;  // present iff irreducible && aperiodic
};

// Unique stationary distribution via the stacked linear system
// [P^T - I; 1^T] mu = [0; 1] solved in the least-squares sense.
// Throws NotIrreducible when null(P^T - I) has dimension > 1.
VectorXd stationary_distribution(const MatrixXd& P);

// Graph analysis on positive entries: strong connectivity and the period
// (gcd of level differences over edges reachable from state 0).
IrreducibilityReport check_irreducible_aperiodic(const MatrixXd& P);

// Total variation distance (1/2) sum |nu - mu| between probability vectors.
double tv_distance(const VectorXd& nu, const VectorXd& mu);

// Exact worst-case TV curve d_k for k = 1..horizon via matrix powers, with a
// certified geometric envelope. eta is the second-largest eigenvalue modulus
// plus a safety margin; c0 dominates every computed ratio d_k / eta^k.
MixingEnvelope mixing_envelope(const MatrixXd& P, const VectorXd& mu,
                               int horizon = kDefaultEnvelopeHorizon);

// Ergodic-bias envelope sigma(T; T0) = 2 c0 eta^T0 / ((1 - eta) T).
double sigma(long T, long T0, double c0, double eta);

// Row x0 of P^k by repeated vector-matrix products (no eigen shortcut).
VectorXd exact_distribution_after_k(const MatrixXd& P, int x0, long k);

// State chain P^pi(s,s') = sum_u pi(u|s) P^u(s,s') with stationary
// distribution, flags, and (when irreducible and aperiodic) the envelope.
// Throws NotIrreducible when the chain has more than one closed class.
ChainModel induce_chain(const Mdp& mdp, const Policy& policy,
                        int horizon = kDefaultEnvelopeHorizon);

// Chain over observed transitions X = (s, u, s') with pi(u|s) > 0 and
// P^u(s,s') > 0. Carries the triple labels and per-state rewards R(s,u) so
// step maps can evaluate updates directly from a lifted state index.
struct LiftedChain {
  ChainModel chain;
  std::vector<std::array<int, 3>> states;  // canonical (s,u,s') order
  std::vector<double> rewards;             // R(s,u) per lifted state

  int size() const { return static_cast<int>(states.size()); }
};

// Lifted transition x_i -> x_j = [s_j == s'_i] pi(u_j|s_j) P^{u_j}(s_j,s'_j);
// stationary mass mu_X(s,u,s') = mu(s) pi(u|s) P^u(s,s').
// Requires the induced state chain to be irreducible and aperiodic.
LiftedChain lift_chain(const Mdp& mdp, const Policy& policy,
                       int horizon = kDefaultEnvelopeHorizon);

}  // namespace salab
