#include "salab/sa_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "salab/parallel.hpp"

namespace salab {

MarkovNoise::MarkovNoise(std::shared_ptr<const ChainModel> chain, InitialDistribution init,
                         int point_state)
    : chain_(std::move(chain)), init_(init), point_state_(point_state) {
  const MatrixXd& P = chain_->transition;
  const int n = static_cast<int>(P.rows());
  if (point_state_ < 0 || point_state_ >= n) {
    fail(ErrorCode::IndexOutOfRange, "initial point-mass state out of range");
  }
  row_cdf_.resize(n);
  for (int i = 0; i < n; ++i) {
    row_cdf_[i].resize(n);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += P(i, j);
      row_cdf_[i][j] = acc;
    }
    row_cdf_[i][n - 1] = 1.0;  // guard against rounding at the top
  }
  stationary_cdf_.resize(n);
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += chain_->stationary(j);
    stationary_cdf_[j] = acc;
  }
  stationary_cdf_[n - 1] = 1.0;
}

int MarkovNoise::initial_state(Rng& rng) const {
  switch (init_) {
    case InitialDistribution::kPointMass:
      return point_state_;
    case InitialDistribution::kUniform:
      return static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(alphabet_size()));
    case InitialDistribution::kStationary:
      return rng.sample_cdf(stationary_cdf_);
  }
  return point_state_;
}

VectorXd step(const VectorXd& theta, int x, double epsilon, const StepMap& map) {
  if (!(epsilon > 0.0)) fail(ErrorCode::ValidationError, "stepsize must be positive");
  VectorXd out(map.dim());
  map.f(theta, x, out);
  out = theta + epsilon * out;
  if (!out.allFinite()) fail(ErrorCode::NonFiniteIterate, "non-finite iterate after one step");
  return out;
}

namespace {

// Core loop shared by run_trajectory and monte_carlo_mse. Returns the index
// of the first bad iterate, or -1 on success. When `record` is non-null the
// full path is stored; `sqnorms` always receives ||theta_k||^2.
long simulate(const StepMap& map, const NoiseProcess& noise, const VectorXd& theta0,
              double epsilon, int K, std::uint64_t seed, Trajectory* record,
              std::vector<double>* sqnorms) {
  Rng rng(seed);
  const int d = map.dim();
  VectorXd theta = theta0;
  VectorXd direction(d);
  int x = noise.initial_state(rng);

  if (record) {
    record->epsilon = epsilon;
    record->seed = seed;
    record->thetas.clear();
    record->thetas.reserve(K + 1);
    record->noise.clear();
    record->noise.reserve(K + 1);
    record->thetas.push_back(theta);
    record->noise.push_back(x);
  }
  if (sqnorms) {
    sqnorms->clear();
    sqnorms->reserve(K + 1);
    sqnorms->push_back(theta.squaredNorm());
  }

  for (int k = 0; k < K; ++k) {
    map.f(theta, x, direction);
    theta += epsilon * direction;
    if (!theta.allFinite() || theta.norm() > kDivergenceGuard) return k + 1;
    x = noise.next(x, rng);
    if (record) {
      record->thetas.push_back(theta);
      record->noise.push_back(x);
    }
    if (sqnorms) sqnorms->push_back(theta.squaredNorm());
  }
  return -1;
}

}  // namespace

Trajectory run_trajectory(const StepMap& map, const NoiseProcess& noise, const VectorXd& theta0,
                          double epsilon, int K, std::uint64_t seed) {
  if (K < 1) fail(ErrorCode::ValidationError, "trajectory length K must be >= 1");
  if (!(epsilon > 0.0)) fail(ErrorCode::ValidationError, "stepsize must be positive");
  Trajectory traj;
  const long bad = simulate(map, noise, theta0, epsilon, K, seed, &traj, nullptr);
  if (bad >= 0) {
    fail(ErrorCode::NonFiniteIterate, "iterate diverged at step " + std::to_string(bad));
  }
  return traj;
}

MseCurve monte_carlo_mse(const StepMap& map, const NoiseProcess& noise, const VectorXd& theta0,
                         double epsilon, int K, int N, std::uint64_t master_seed,
                         const MonteCarloOptions& options) {
  if (N < 2) fail(ErrorCode::ValidationError, "monte_carlo_mse needs N >= 2 trajectories");
  if (K < 1) fail(ErrorCode::ValidationError, "horizon K must be >= 1");

  const int n_threads = resolve_threads(options.n_threads);
  const int block = 256;

  std::vector<PairwiseSum> sum(K + 1), sum_sq(K + 1);
  int n_diverged = 0;
  long first_bad_trajectory = -1;

  std::vector<std::vector<double>> buffer(block);
  std::vector<long> failed_at(block);

  for (int begin = 0; begin < N; begin += block) {
    const int count = std::min(block, N - begin);
    parallel_for(count, n_threads, [&](long slot) {
      const std::uint64_t seed = derive_stream_seed(master_seed, begin + slot);
      failed_at[slot] =
          simulate(map, noise, theta0, epsilon, K, seed, nullptr, &buffer[slot]);
    });
    // Reduction strictly in trajectory-index order.
    for (int slot = 0; slot < count; ++slot) {
      if (failed_at[slot] >= 0) {
        ++n_diverged;
        if (first_bad_trajectory < 0) first_bad_trajectory = begin + slot;
        continue;
      }
      for (int k = 0; k <= K; ++k) {
        const double v = buffer[slot][k];
        sum[k].add(v);
        sum_sq[k].add(v * v);
      }
    }
  }

  if (n_diverged > 0 && !options.allow_diverged) {
    fail(ErrorCode::NonFiniteIterate,
         std::to_string(n_diverged) + " trajectories diverged (first at index " +
             std::to_string(first_bad_trajectory) + "); rerun with --allow-diverged to drop them");
  }
  const long n_kept = N - n_diverged;
  if (n_kept < 2) fail(ErrorCode::NonFiniteIterate, "fewer than 2 trajectories survived");

  MseCurve curve;
  curve.epsilon = epsilon;
  curve.n_trajectories = static_cast<int>(n_kept);
  curve.n_diverged = n_diverged;
  curve.mean.resize(K + 1);
  curve.std_error.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    const double s1 = sum[k].total();
    const double s2 = sum_sq[k].total();
    const double mean = s1 / static_cast<double>(n_kept);
    double var = (s2 - s1 * mean) / static_cast<double>(n_kept - 1);
    if (var < 0.0) var = 0.0;  // rounding when the samples are identical
    curve.mean[k] = mean;
    curve.std_error[k] = std::sqrt(var / static_cast<double>(n_kept));
  }
  return curve;
}

double exact_ergodic_bias(const StepMap& map, const ChainModel& chain, const VectorXd& theta,
                          long T0, long T, int x0) {
  if (T < 1) fail(ErrorCode::ValidationError, "window length T must be >= 1");
  if (T0 < 0) fail(ErrorCode::ValidationError, "offset T0 must be >= 0");
  const int n = static_cast<int>(chain.transition.rows());
  if (n < 1) fail(ErrorCode::InfiniteAlphabet, "ergodic bias oracle needs a finite alphabet");
  if (map.alphabet_size() != n) {
    fail(ErrorCode::DimensionMismatch, "step map alphabet does not match the chain");
  }
  if (x0 < 0 || x0 >= n) fail(ErrorCode::IndexOutOfRange, "start state out of range");

  VectorXd nu = VectorXd::Zero(n);
  nu(x0) = 1.0;
  VectorXd acc = VectorXd::Zero(map.dim());
  VectorXd fx(map.dim());
  for (long k = 0; k < T0 + T; ++k) {
    if (k >= T0) {
      for (int x = 0; x < n; ++x) {
        if (nu(x) == 0.0) continue;
        map.f(theta, x, fx);
        acc += nu(x) * fx;
      }
    }
    if (k + 1 < T0 + T) nu = chain.transition.transpose() * nu;
  }
  return (acc / static_cast<double>(T) - map.f_bar(theta)).norm();
}

ErgodicBiasCertification certify_ergodic_bias(const StepMap& map, const ChainModel& chain,
                                              const std::vector<VectorXd>& thetas, long T_max,
                                              long T0_max, double fp_allowance_rel) {
  if (!chain.envelope) {
    fail(ErrorCode::EnvelopeFailure, "certification requires a fitted mixing envelope");
  }
  const int n = static_cast<int>(chain.transition.rows());
  const int d = map.dim();
  const double L = map.growth_constant();
  const double c0 = chain.envelope->c0;
  const double eta = chain.envelope->eta;
  const long horizon = T0_max + T_max;  // distributions needed for k < horizon
  const long n_grid = (T0_max + 1) * T_max;

  ErgodicBiasCertification cert;
  cert.worst_margin = -std::numeric_limits<double>::infinity();

  // Per start state, one column per grid point (T0, T) holding the window
  // average of Pr(X_k | X_0 = x0) over k = T0..T0+T-1.
  std::vector<MatrixXd> windows(n);
  std::vector<double> sigma_grid(n_grid);
  for (int x0 = 0; x0 < n; ++x0) {
    std::vector<VectorXd> prefix(horizon + 1);
    prefix[0] = VectorXd::Zero(n);
    VectorXd nu = VectorXd::Zero(n);
    nu(x0) = 1.0;
    for (long m = 1; m <= horizon; ++m) {
      prefix[m] = prefix[m - 1] + nu;
      if (m < horizon) nu = chain.transition.transpose() * nu;
    }
    windows[x0].resize(n, n_grid);
    long col = 0;
    for (long T0 = 0; T0 <= T0_max; ++T0) {
      for (long T = 1; T <= T_max; ++T, ++col) {
        windows[x0].col(col) = (prefix[T0 + T] - prefix[T0]) / static_cast<double>(T);
        if (x0 == 0) sigma_grid[col] = sigma(T, T0, c0, eta);
      }
    }
  }

  MatrixXd F(d, n);
  VectorXd fx(d);
  for (const VectorXd& theta : thetas) {
    for (int x = 0; x < n; ++x) {
      map.f(theta, x, fx);
      F.col(x) = fx;
    }
    const VectorXd fbar = map.f_bar(theta);
    const double growth = L * (theta.norm() + 1.0);
    const double allowance = fp_allowance_rel * growth;

    for (int x0 = 0; x0 < n; ++x0) {
      const MatrixXd biases = F * windows[x0];  // one column per grid point
      long col = 0;
      for (long T0 = 0; T0 <= T0_max; ++T0) {
        for (long T = 1; T <= T_max; ++T, ++col) {
          const double bias = (biases.col(col) - fbar).norm();
          const double margin = bias - sigma_grid[col] * growth - allowance;
          ++cert.n_checked;
          if (margin > 0.0) ++cert.n_violations;
          if (margin > cert.worst_margin) {
            cert.worst_margin = margin;
            cert.worst_T = T;
            cert.worst_T0 = T0;
            cert.worst_x0 = x0;
          }
        }
      }
    }
  }
  cert.pass = (cert.n_violations == 0);
  return cert;
}

LipschitzGrowthReport check_lipschitz_growth(const StepMap& map, int n_samples, double radius,
                                             std::uint64_t seed) {
  const int d = map.dim();
  const int n = map.alphabet_size();
  Rng rng(seed);

  const auto ball_point = [&]() {
    VectorXd v(d);
    double norm = 0.0;
    do {
      for (int i = 0; i < d; ++i) v(i) = rng.gaussian();
      norm = v.norm();
    } while (norm < 1e-12);
    const double r = radius * std::pow(rng.uniform01(), 1.0 / d);
    return VectorXd((r / norm) * v);
  };

  LipschitzGrowthReport report;
  VectorXd fa(d), fb(d);
  for (int i = 0; i < n_samples; ++i) {
    const VectorXd a = ball_point();
    const VectorXd b = (i == 0) ? VectorXd(VectorXd::Zero(d)) : ball_point();
    const double dist = (a - b).norm();
    for (int x = 0; x < n; ++x) {
      map.f(a, x, fa);
      map.f(b, x, fb);
      if (dist > 1e-12) {
        report.lipschitz_estimate = std::max(report.lipschitz_estimate, (fa - fb).norm() / dist);
      }
      report.growth_estimate = std::max(report.growth_estimate, fa.norm() / (a.norm() + 1.0));
      report.growth_estimate = std::max(report.growth_estimate, fb.norm() / (b.norm() + 1.0));
    }
  }
  const double budget = map.growth_constant() * (1.0 + 1e-9);
  report.pass = report.lipschitz_estimate <= budget && report.growth_estimate <= budget;
  return report;
}

}  // namespace salab
