#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "salab/chain.hpp"
#include "salab/rng.hpp"

namespace salab {

// Update direction of a stochastic-approximation recursion in centered
// coordinates (theta measured from the equilibrium of the mean ODE). The
// noise state is an index into a finite alphabet shared with the driving
// NoiseProcess.
class StepMap {
 public:
  virtual ~StepMap() = default;

  virtual int dim() const = 0;
  virtual int alphabet_size() const = 0;

  virtual void f(const VectorXd& theta, int x, VectorXd& out) const = 0;

  VectorXd f(const VectorXd& theta, int x) const {
    VectorXd out(dim());
    f(theta, x, out);
    return out;
  }

  // Mean field of the associated ODE; vanishes at the (centered) origin.
  virtual VectorXd f_bar(const VectorXd& theta) const = 0;

  // Shared Lipschitz/growth constant L: ||f(a,x)-f(b,x)|| <= L||a-b|| and
  // ||f(theta,x)|| <= L(||theta||+1).
  virtual double growth_constant() const = 0;

  // Equilibrium in original (uncentered) coordinates.
  virtual const VectorXd& theta_star() const = 0;
};

enum class InitialDistribution { kPointMass, kUniform, kStationary };

class NoiseProcess {
 public:
  virtual ~NoiseProcess() = default;

  // 0 means no finite alphabet.
  virtual int alphabet_size() const = 0;
  virtual int initial_state(Rng& rng) const = 0;
  virtual int next(int state, Rng& rng) const = 0;
  virtual const ChainModel* chain() const { return nullptr; }
};

// Markov noise driven by a ChainModel, sampled by CDF inversion so draws are
// reproducible across platforms.
class MarkovNoise : public NoiseProcess {
 public:
  MarkovNoise(std::shared_ptr<const ChainModel> chain,
              InitialDistribution init = InitialDistribution::kPointMass, int point_state = 0);

  int alphabet_size() const override { return static_cast<int>(row_cdf_.size()); }
  int initial_state(Rng& rng) const override;
  int next(int state, Rng& rng) const override { return rng.sample_cdf(row_cdf_[state]); }
  const ChainModel* chain() const override { return chain_.get(); }

 private:
  std::shared_ptr<const ChainModel> chain_;
  std::vector<std::vector<double>> row_cdf_;
  InitialDistribution init_;
  int point_state_;
  std::vector<double> stationary_cdf_;
};

// One realized SA path: centered iterates theta_0..theta_K and the noise
// states X_0..X_K that produced them.
struct Trajectory {
  double epsilon = 0.0;
  std::vector<VectorXd> thetas;
  std::vector<int> noise;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(thetas.size()) - 1; }
};

// Per-iteration Monte Carlo estimate of E||theta_k||^2 with standard errors.
struct MseCurve {
  double epsilon = 0.0;
  int n_trajectories = 0;  // trajectories included in the estimate
  int n_diverged = 0;
  std::vector<double> mean;
  std::vector<double> std_error;
};

}  // namespace salab
