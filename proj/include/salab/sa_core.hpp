#pragma once

#include <cstdint>
#include <vector>

#include "salab/step_map.hpp"

namespace salab {

constexpr double kDivergenceGuard = 1e12;  // abort a trajectory past this norm

// Single update theta + epsilon * f(theta, x).
// Throws NonFiniteIterate when the result is not finite.
VectorXd step(const VectorXd& theta, int x, double epsilon, const StepMap& map);

// Simulates K steps from theta0 (centered coordinates); deterministic given
// the seed. X_{k+1} is drawn by the process, X_0 by its initial distribution.
Trajectory run_trajectory(const StepMap& map, const NoiseProcess& noise, const VectorXd& theta0,
                          double epsilon, int K, std::uint64_t seed);

struct MonteCarloOptions {
  bool allow_diverged = false;  // drop diverged trajectories instead of failing
  int n_threads = 0;            // 0 = auto (SA_LAB_THREADS or hardware)
};

// Mean and standard error of ||theta_k||^2 over N independent trajectories.
// Trajectory i uses seed derive_stream_seed(master_seed, i); sums are
// accumulated pairwise in trajectory-index order, so the result is bitwise
// identical for any worker count.
MseCurve monte_carlo_mse(const StepMap& map, const NoiseProcess& noise, const VectorXd& theta0,
                         double epsilon, int K, int N, std::uint64_t master_seed,
                         const MonteCarloOptions& options = {});

// Exact bias of the T-window ergodic average started after T0 steps from the
// point mass at x0:
//   || (1/T) sum_{k=T0}^{T0+T-1} sum_x Pr(X_k=x|X_0=x0) f(theta,x) - f_bar(theta) ||
// computed by matrix powers.
double exact_ergodic_bias(const StepMap& map, const ChainModel& chain, const VectorXd& theta,
                          long T0, long T, int x0);

struct ErgodicBiasCertification {
  bool pass = false;
  long n_checked = 0;
  long n_violations = 0;
  double worst_margin = 0.0;  // max over checks of bias - envelope (<= 0 when pass)
  long worst_T = 0, worst_T0 = 0;
  int worst_x0 = 0;
};

// Certifies bias(theta,T,T0,x0) <= sigma(T;T0) L (||theta||+1) over the full
// grid T in [1,T_max], T0 in [0,T0_max], every start state, and the supplied
// test directions. Uses window prefix sums so the grid costs one pass of
// matrix powers per start state. `fp_allowance_rel`, scaled by L(||theta||+1),
// absorbs rounding in the matrix-power oracle itself; it sits far below any
// envelope value the grid can reach, so it cannot mask a real violation.
ErgodicBiasCertification certify_ergodic_bias(const StepMap& map, const ChainModel& chain,
                                              const std::vector<VectorXd>& thetas, long T_max,
                                              long T0_max, double fp_allowance_rel = 1e-12);

struct LipschitzGrowthReport {
  double lipschitz_estimate = 0.0;
  double growth_estimate = 0.0;
  bool pass = false;
};

// Sampled lower estimates of the Lipschitz and growth ratios over the full
// noise alphabet; pass means both stay below the declared constant.
LipschitzGrowthReport check_lipschitz_growth(const StepMap& map, int n_samples, double radius,
                                             std::uint64_t seed);

}  // namespace salab
