#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "salab/step_map.hpp"

namespace salab {

// Ergodic-bias envelope as a function of (window length T, offset T0).
using SigmaFn = std::function<double(long, long)>;

// Quadratic Lyapunov certificate W(theta) = theta^T P theta with the
// associated drift constants:
//   c1 ||theta||^2 <= W(theta) <= c2 ||theta||^2,
//   2 theta^T P f_bar(theta)  <= -c3 L ||theta||^2,
//   gradient Lipschitz constant c4.
struct QuadraticLyapunov {
  MatrixXd P;
  MatrixXd Q;  // right-hand side of the solve; empty for explicit certificates
  double L = 0.0;
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;

  double value(const VectorXd& theta) const { return theta.dot(P * theta); }
};

// Solves A^T P + P A = -Q for symmetric positive definite P via the
// vectorized d^2 x d^2 linear system, and fills in
// c1 = lmin(P), c2 = lmax(P), c3 = lmin(Q)/L, c4 = 2 lmax(P).
// A must be Hurwitz (all eigenvalue real parts < -1e-12).
QuadraticLyapunov solve_lyapunov(const MatrixXd& A, const MatrixXd& Q, double L);

// Certificate for W(theta) = ||theta||^2 / 2 (P = I/2, c1 = c2 = 1/2,
// c4 = 1) with a caller-supplied drift constant c3.
QuadraticLyapunov identity_certificate(int dim, double c3, double L);

// beta_k(T,eps) = eps L T (1+eps L)^{T-2} + sigma(T;k)
double beta_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma);

// rho_k(T,eps) = 2 beta_k + 2 eps L T [eps^2 L^2 T^2 (1+eps L)^{2T-4} + 13]
double rho_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma);

// kappa_k(T,eps) = 2 beta_k + 16 eps L T
double kappa_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma);

// Smallest window with sigma(T;0) <= delta/4 (linear scan, capped).
long select_T_delta(double delta, const SigmaFn& sigma, long cap = 1000000);

// nu(eps) = eps L T [(1+eps L)^{T-2} + 13] + (eps L T)^3 (1+eps L)^{2T-4},
// the stepsize polynomial whose root pins the admissible stepsize.
double nu_fn(double epsilon, double L, long T_delta);

// Unique positive root of nu(eps) = delta/4 by bracketing and bisection to
// residual 1e-12.
double solve_epsilon_delta(double delta, long T_delta, double L);

// Everything needed to evaluate the finite-time bound curve.
struct BoundConstants {
  double delta = 0.0;
  long T_star = 0;
  double eps_delta = 0.0;
  double L = 0.0;
  double c1p = 0.0, c2p = 0.0, c2pp = 0.0, c3p = 0.0, c4p = 0.0, c4pp = 0.0, c5p = 0.0,
         c6 = 0.0;
};

// Derives the full constant chain from a certificate:
//   T_star, eps_delta, then
//   c1' = c1
//   c2' = 2 c2 T* [2 + (2T*-1)(1+eps_d L)^{2T*-2} eps_d L] / (2 + eps_d L)
//   c2''= 2 c2 sum_{j=1}^{T*-1} j^2 [1 + (j-1)(1+eps_d L)^{j-2}/2]^2
//   c3' = L T* (c3 - c4 delta)                        (needs delta < c3/c4)
//   c4' = c4 L T* [2L(1+eps_d L)^{T*-2} + 16 L T*]
//   c5' = 2 c4 L T*
//   c4''= c4' + c3' c2'' eps_d L^2 / c2'
//   c6  = c2' (c4'' + c5') / c3'
BoundConstants derive_constants(const QuadraticLyapunov& cert, double L, double delta,
                                const SigmaFn& sigma);

// First iteration at which sigma(T*;k) <= epsilon (scan over k >= 1).
long k_epsilon(const BoundConstants& constants, double epsilon, const SigmaFn& sigma,
               long cap = 1000000);

// Finite-time bound evaluated per iteration:
//   B_k = (c2'/c1') a^k ||theta0||^2 + (c2'' L^2/c1') eps^2 + (c6/c1') eps
//       + (c6/c1') a^{max(k-k_eps,0)} delta,   a = 1 - c3' eps / c2'.
// Stored componentwise so the two-phase shape can be asserted structurally.
struct BoundCurve {
  double epsilon = 0.0;
  long k_eps = 0;
  double contraction = 0.0;       // a
  double transient_coeff = 0.0;   // (c2'/c1') ||theta0||^2
  double steady = 0.0;            // (c2'' L^2 eps^2 + c6 eps) / c1'
  double delta_coeff = 0.0;       // c6 delta / c1'
  std::vector<double> values;     // B_0..B_K
};

BoundCurve bound_curve(const BoundConstants& constants, double epsilon, double theta0_norm,
                       int K, const SigmaFn& sigma);

// Realized multistep Lyapunov value sum_{j=k}^{k+T-1} W(theta_j).
double multistep_lyapunov(const QuadraticLyapunov& cert, const Trajectory& traj, int k, int T);

// || theta_{k+T} - theta_k - eps sum_{j=k}^{k+T-1} f(theta_k, X_j) ||
double g_residual(const Trajectory& traj, const StepMap& map, int k, int T);

// || theta_{k+T} - theta_k - eps T f_bar(theta_k) ||
double gprime_residual(const Trajectory& traj, const StepMap& map, int k, int T);

struct DriftPoint {
  long k = 0;       // iteration index; feeds sigma(T*;k) in the ceiling
  VectorXd theta;   // centered iterate
  int x = 0;        // frozen noise state
};

struct DriftPointResult {
  DriftPoint point;
  double estimate = 0.0;   // conditional Monte Carlo mean of the W' increment
  double std_error = 0.0;
  double ceiling = 0.0;    // -eps c3' ||theta||^2 + c4' eps^2 + c5' sigma(T*;k) eps
  bool pass = false;       // estimate <= ceiling + 3 std_error
};

struct DriftReport {
  std::vector<DriftPointResult> points;
  int n_pass = 0;
  bool pass = false;  // every point passed
};

// Conditional drift of the multistep function at frozen (theta, x) points,
// estimated by averaging W(theta_{k+T*}) - W(theta_k) over fresh noise
// continuations of length T*.
DriftReport drift_check(const StepMap& map, const NoiseProcess& noise,
                        const QuadraticLyapunov& cert, const BoundConstants& constants,
                        double epsilon, const std::vector<DriftPoint>& points,
                        int n_continuations, std::uint64_t seed, const SigmaFn& sigma,
                        int n_threads = 0);

}  // namespace salab
