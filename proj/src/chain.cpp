#include "salab/chain.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace salab {
namespace {

std::vector<std::vector<int>> adjacency(const MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (P(i, j) > 0.0) adj[i].push_back(j);
    }
  }
  return adj;
}

std::vector<int> reachable_from(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<int> order;
  std::vector<bool> seen(adj.size(), false);
  std::vector<int> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
    }
  }
  return order;
}

// Kosaraju condensation; returns the SCC id per vertex and the SCC count.
int strongly_connected_components(const std::vector<std::vector<int>>& adj,
                                  std::vector<int>& component) {
  const int n = static_cast<int>(adj.size());
  std::vector<std::vector<int>> radj(n);
  for (int v = 0; v < n; ++v) {
    for (int w : adj[v]) radj[w].push_back(v);
  }

  std::vector<int> finish_order;
  finish_order.reserve(n);
  std::vector<char> seen(n, 0);
  for (int root = 0; root < n; ++root) {
    if (seen[root]) continue;
    // Iterative DFS recording finish times.
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    seen[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < adj[v].size()) {
        const int w = adj[v][next++];
        if (!seen[w]) {
          seen[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        finish_order.push_back(v);
        stack.pop_back();
      }
    }
  }

  component.assign(n, -1);
  int n_components = 0;
  for (auto it = finish_order.rbegin(); it != finish_order.rend(); ++it) {
    if (component[*it] >= 0) continue;
    std::vector<int> stack{*it};
    component[*it] = n_components;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : radj[v]) {
        if (component[w] < 0) {
          component[w] = n_components;
          stack.push_back(w);
        }
      }
    }
    ++n_components;
  }
  return n_components;
}

int count_closed_components(const MatrixXd& P) {
  const auto adj = adjacency(P);
  std::vector<int> component;
  const int n_components = strongly_connected_components(adj, component);
  std::vector<char> closed(n_components, 1);
  for (int v = 0; v < static_cast<int>(adj.size()); ++v) {
    for (int w : adj[v]) {
      if (component[w] != component[v]) closed[component[v]] = 0;
    }
  }
  return static_cast<int>(std::count(closed.begin(), closed.end(), 1));
}

// Second-largest eigenvalue modulus of a stochastic matrix.
double slem(const MatrixXd& P) {
  if (P.rows() < 2) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(P, /*computeEigenvectors=*/false);
  std::vector<double> moduli(P.rows());
  for (int i = 0; i < P.rows(); ++i) moduli[i] = std::abs(es.eigenvalues()[i]);
  std::sort(moduli.begin(), moduli.end(), std::greater<double>());
  return moduli[1];
}

}  // namespace

VectorXd stationary_distribution(const MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  if (P.cols() != n) fail(ErrorCode::DimensionMismatch, "transition matrix must be square");

  MatrixXd M = P.transpose() - MatrixXd::Identity(n, n);

  // Uniqueness: null(P^T - I) must be one-dimensional.
  Eigen::BDCSVD<MatrixXd> svd(M);
  const double sv_max = svd.singularValues()(0);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > 1e-10 * std::max(sv_max, 1.0)) ++rank;
  }
  if (rank < n - 1) {
    fail(ErrorCode::NotIrreducible,
         "stationary distribution is not unique (null space dimension " +
             std::to_string(n - rank) + ")");
  }

  MatrixXd stacked(n + 1, n);
  stacked.topRows(n) = M;
  stacked.bottomRows(1).setOnes();
  VectorXd rhs = VectorXd::Zero(n + 1);
  rhs(n) = 1.0;
  VectorXd mu = stacked.colPivHouseholderQr().solve(rhs);

  // Clamp numerical negatives and renormalize exactly.
  for (int i = 0; i < n; ++i) {
    if (mu(i) < 0.0) {
      if (mu(i) < -1e-9) {
        fail(ErrorCode::SolveSingular, "stationary solve produced a negative probability");
      }
      mu(i) = 0.0;
    }
  }
  mu /= mu.sum();

  if ((mu.transpose() * P - mu.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    fail(ErrorCode::SolveSingular, "stationary residual exceeds 1e-10");
  }
  return mu;
}

IrreducibilityReport check_irreducible_aperiodic(const MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  if (P.cols() != n) fail(ErrorCode::DimensionMismatch, "transition matrix must be square");
  const auto adj = adjacency(P);

  IrreducibilityReport report;

  // Strong connectivity: forward and backward reachability from state 0.
  const bool forward_full = static_cast<int>(reachable_from(adj, 0).size()) == n;
  std::vector<std::vector<int>> radj(n);
  for (int v = 0; v < n; ++v) {
    for (int w : adj[v]) radj[w].push_back(v);
  }
  const bool backward_full = static_cast<int>(reachable_from(radj, 0).size()) == n;
  report.irreducible = forward_full && backward_full;

  // Period: BFS levels from state 0; gcd of (level[u] + 1 - level[v]) over
  // edges inside the reachable set.
  std::vector<long> level(n, -1);
  std::vector<int> queue{0};
  level[0] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (int w : adj[v]) {
      if (level[w] < 0) {
        level[w] = level[v] + 1;
        queue.push_back(w);
      }
    }
  }
  long g = 0;
  for (int v : queue) {
    for (int w : adj[v]) {
      if (level[w] >= 0) g = std::gcd(g, std::abs(level[v] + 1 - level[w]));
    }
  }
  report.period = static_cast<int>(g);
  report.aperiodic = (g == 1);
  return report;
}

double tv_distance(const VectorXd& nu, const VectorXd& mu) {
  if (nu.size() != mu.size()) {
    fail(ErrorCode::DimensionMismatch, "tv_distance needs vectors on the same support");
  }
  if (std::abs(nu.sum() - 1.0) > 1e-10 || std::abs(mu.sum() - 1.0) > 1e-10) {
    fail(ErrorCode::ValidationError, "tv_distance arguments must sum to 1 within 1e-10");
  }
  return 0.5 * (nu - mu).cwiseAbs().sum();
}

MixingEnvelope mixing_envelope(const MatrixXd& P, const VectorXd& mu, int horizon) {
  if (horizon < 2) fail(ErrorCode::ValidationError, "envelope horizon must be >= 2");
  const auto report = check_irreducible_aperiodic(P);
  if (!report.irreducible) fail(ErrorCode::NotIrreducible, "envelope requires an irreducible chain");
  if (!report.aperiodic) {
    fail(ErrorCode::PeriodicChain,
         "envelope requires an aperiodic chain (period " + std::to_string(report.period) + ")");
  }

  const double lambda2 = slem(P);
  if (lambda2 >= 1.0 - 1e-12) {
    fail(ErrorCode::EnvelopeFailure, "second eigenvalue modulus is numerically 1");
  }
  const double margin = std::max(1e-6, 0.01 * (1.0 - lambda2));
  const double eta = std::min(lambda2 + margin, 1.0 - 1e-12);

  MixingEnvelope env;
  env.eta = eta;

  const int n = static_cast<int>(P.rows());
  // k = 0: the worst point mass sits at distance 1 - min(mu) from mu. The
  // envelope must cover it for averages whose window starts at the initial
  // state (T0 = 0).
  double c0 = 1.0 - mu.minCoeff();

  MatrixXd Pk = P;  // P^k
  double eta_k = 1.0;
  for (int k = 1; k <= horizon; ++k) {
    eta_k *= eta;
    double dk = 0.0;
    for (int x = 0; x < n; ++x) {
      dk = std::max(dk, 0.5 * (Pk.row(x).transpose() - mu).cwiseAbs().sum());
    }
    env.tv_curve.push_back(dk);
    c0 = std::max(c0, dk / eta_k);
    if (dk < kEnvelopeFloor) break;
    if (k < horizon) Pk *= P;
  }
  // Absorb the divide/multiply round trip so d_k <= c0 eta^k holds exactly.
  env.c0 = c0 * (1.0 + 1e-12);

  // Envelope validity over the computed curve.
  eta_k = 1.0;
  for (std::size_t k = 1; k <= env.tv_curve.size(); ++k) {
    eta_k *= eta;
    if (env.tv_curve[k - 1] > env.c0 * eta_k) {
      fail(ErrorCode::EnvelopeFailure, "tv curve escapes the fitted envelope");
    }
  }
  return env;
}

double sigma(long T, long T0, double c0, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) fail(ErrorCode::InvalidRate, "eta must lie in (0,1)");
  if (T < 1) fail(ErrorCode::ValidationError, "sigma needs T >= 1");
  if (T0 < 0) fail(ErrorCode::ValidationError, "sigma needs T0 >= 0");
  if (c0 < 0.0) fail(ErrorCode::ValidationError, "sigma needs c0 >= 0");
  return 2.0 * c0 * std::pow(eta, static_cast<double>(T0)) /
         ((1.0 - eta) * static_cast<double>(T));
}

VectorXd exact_distribution_after_k(const MatrixXd& P, int x0, long k) {
  const int n = static_cast<int>(P.rows());
  if (x0 < 0 || x0 >= n) fail(ErrorCode::IndexOutOfRange, "start state out of range");
  if (k < 0) fail(ErrorCode::ValidationError, "k must be >= 0");
  VectorXd nu = VectorXd::Zero(n);
  nu(x0) = 1.0;
  for (long step = 0; step < k; ++step) nu = P.transpose() * nu;
  return nu;
}

ChainModel induce_chain(const Mdp& mdp, const Policy& policy, int horizon) {
  if (policy.probs.rows() != mdp.n_states || policy.probs.cols() != mdp.n_actions) {
    fail(ErrorCode::DimensionMismatch, "policy shape does not match the MDP");
  }
  MatrixXd P = MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int u = 0; u < mdp.n_actions; ++u) {
    P += policy.probs.col(u).asDiagonal() * mdp.transitions[u];
  }

  const int n_closed = count_closed_components(P);
  if (n_closed > 1) {
    fail(ErrorCode::NotIrreducible,
         "induced chain has " + std::to_string(n_closed) + " closed communicating classes");
  }

  ChainModel chain;
  chain.transition = std::move(P);
  chain.stationary = stationary_distribution(chain.transition);
  const auto report = check_irreducible_aperiodic(chain.transition);
  chain.irreducible = report.irreducible;
  chain.aperiodic = report.aperiodic;
  chain.period = report.period;
  if (chain.irreducible && chain.aperiodic) {
    chain.envelope = mixing_envelope(chain.transition, chain.stationary, horizon);
  }
  return chain;
}

LiftedChain lift_chain(const Mdp& mdp, const Policy& policy, int horizon) {
  const ChainModel state_chain = induce_chain(mdp, policy, /*horizon=*/2);
  if (!state_chain.irreducible) {
    fail(ErrorCode::NotIrreducible, "lifting requires an irreducible state chain");
  }
  if (!state_chain.aperiodic) {
    fail(ErrorCode::PeriodicChain, "lifting requires an aperiodic state chain (period " +
                                       std::to_string(state_chain.period) + ")");
  }

  LiftedChain lifted;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int u = 0; u < mdp.n_actions; ++u) {
      if (policy.probs(s, u) <= 0.0) continue;
      for (int sp = 0; sp < mdp.n_states; ++sp) {
        if (mdp.transitions[u](s, sp) <= 0.0) continue;
        lifted.states.push_back({s, u, sp});
        lifted.rewards.push_back(mdp.rewards(s, u));
      }
    }
  }
  const int nx = lifted.size();

  MatrixXd T = MatrixXd::Zero(nx, nx);
  VectorXd mu_x(nx);
  const VectorXd& mu = state_chain.stationary;
  for (int i = 0; i < nx; ++i) {
    const auto [si, ui, spi] = lifted.states[i];
    mu_x(i) = mu(si) * policy.probs(si, ui) * mdp.transitions[ui](si, spi);
    for (int j = 0; j < nx; ++j) {
      const auto [sj, uj, spj] = lifted.states[j];
      if (sj != spi) continue;
      T(i, j) = policy.probs(sj, uj) * mdp.transitions[uj](sj, spj);
    }
  }

  ChainModel& chain = lifted.chain;
  chain.transition = std::move(T);
  chain.stationary = mu_x / mu_x.sum();
  const auto report = check_irreducible_aperiodic(chain.transition);
  chain.irreducible = report.irreducible;
  chain.aperiodic = report.aperiodic;
  chain.period = report.period;
  if (chain.irreducible && chain.aperiodic) {
    chain.envelope = mixing_envelope(chain.transition, chain.stationary, horizon);
  }
  return lifted;
}

}  // namespace salab
