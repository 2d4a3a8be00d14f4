#include "salab/lyapunov.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "salab/parallel.hpp"
#include "salab/rng.hpp"

namespace salab {
namespace {

// (1 + eps L)^T via exp(T log1p(eps L)); stable for the large windows that
// slowly mixing chains force.
double pow1p(double eps_l, double exponent) {
  return std::exp(exponent * std::log1p(eps_l));
}

}  // namespace

QuadraticLyapunov solve_lyapunov(const MatrixXd& A, const MatrixXd& Q, double L) {
  const int d = static_cast<int>(A.rows());
  if (A.cols() != d) fail(ErrorCode::DimensionMismatch, "A must be square");
  if (Q.rows() != d || Q.cols() != d) fail(ErrorCode::DimensionMismatch, "Q must match A");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.norm())) {
    fail(ErrorCode::ValidationError, "Q must be symmetric");
  }
  if (!(L > 0.0)) fail(ErrorCode::ValidationError, "L must be positive");

  Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
  double max_real = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i) max_real = std::max(max_real, es.eigenvalues()[i].real());
  if (!(max_real < -1e-12)) {
    fail(ErrorCode::NotHurwitz,
         "A has an eigenvalue with real part " + std::to_string(max_real));
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> qe(Q);
  const double q_min = qe.eigenvalues().minCoeff();
  if (!(q_min > 0.0)) fail(ErrorCode::ValidationError, "Q must be positive definite");

  // (I (x) A^T + A^T (x) I) vec(P) = -vec(Q), column-major stacking.
  const MatrixXd I = MatrixXd::Identity(d, d);
  MatrixXd K = MatrixXd::Zero(d * d, d * d);
  const MatrixXd At = A.transpose();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      K.block(i * d, j * d, d, d) += I(i, j) * At;  // I (x) A^T
      K.block(i * d, j * d, d, d) += At(i, j) * I;  // A^T (x) I
    }
  }
  Eigen::VectorXd rhs(d * d);
  for (int j = 0; j < d; ++j) rhs.segment(j * d, d) = -Q.col(j);

  Eigen::FullPivLU<MatrixXd> lu(K);
  if (!lu.isInvertible()) fail(ErrorCode::SolveSingular, "vectorized Lyapunov system is singular");
  const Eigen::VectorXd vec_p = lu.solve(rhs);

  MatrixXd P(d, d);
  for (int j = 0; j < d; ++j) P.col(j) = vec_p.segment(j * d, d);
  P = ((P + P.transpose()) / 2.0).eval();

  const double residual = (A.transpose() * P + P * A + Q).norm();
  if (residual > 1e-10 * Q.norm()) {
    fail(ErrorCode::SolveSingular, "Lyapunov residual " + std::to_string(residual) +
                                       " exceeds 1e-10 * ||Q||_F");
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> pe(P);
  const double p_min = pe.eigenvalues().minCoeff();
  const double p_max = pe.eigenvalues().maxCoeff();
  if (!(p_min > 0.0)) fail(ErrorCode::SolveSingular, "solved P is not positive definite");

  QuadraticLyapunov cert;
  cert.P = std::move(P);
  cert.Q = Q;
  cert.L = L;
  cert.c1 = p_min;
  cert.c2 = p_max;
  cert.c3 = q_min / L;
  cert.c4 = 2.0 * p_max;
  return cert;
}

QuadraticLyapunov identity_certificate(int dim, double c3, double L) {
  if (!(c3 > 0.0)) fail(ErrorCode::ValidationError, "drift constant c3 must be positive");
  if (!(L > 0.0)) fail(ErrorCode::ValidationError, "L must be positive");
  QuadraticLyapunov cert;
  cert.P = 0.5 * MatrixXd::Identity(dim, dim);
  cert.L = L;
  cert.c1 = 0.5;
  cert.c2 = 0.5;
  cert.c3 = c3;
  cert.c4 = 1.0;
  return cert;
}

double beta_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma) {
  if (T < 1) fail(ErrorCode::ValidationError, "beta needs T >= 1");
  if (!(epsilon > 0.0)) fail(ErrorCode::ValidationError, "beta needs epsilon > 0");
  const double el = epsilon * L;
  return el * static_cast<double>(T) * pow1p(el, static_cast<double>(T - 2)) + sigma(T, k);
}

double rho_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma) {
  const double el = epsilon * L;
  const double elt = el * static_cast<double>(T);
  return 2.0 * beta_fn(k, T, epsilon, L, sigma) +
         2.0 * elt * (elt * elt * pow1p(el, static_cast<double>(2 * T - 4)) + 13.0);
}

double kappa_fn(long k, long T, double epsilon, double L, const SigmaFn& sigma) {
  return 2.0 * beta_fn(k, T, epsilon, L, sigma) + 16.0 * epsilon * L * static_cast<double>(T);
}

long select_T_delta(double delta, const SigmaFn& sigma, long cap) {
  if (!(delta > 0.0)) fail(ErrorCode::ValidationError, "delta must be positive");
  for (long T = 1; T <= cap; ++T) {
    if (sigma(T, 0) <= delta / 4.0) return T;
  }
  fail(ErrorCode::CapExceeded, "no window T <= " + std::to_string(cap) +
                                   " brings sigma(T;0) below delta/4; chain mixes too slowly");
}

double nu_fn(double epsilon, double L, long T_delta) {
  const double el = epsilon * L;
  const double z = el * static_cast<double>(T_delta);
  return z * (pow1p(el, static_cast<double>(T_delta - 2)) + 13.0) +
         z * z * z * pow1p(el, static_cast<double>(2 * T_delta - 4));
}

double solve_epsilon_delta(double delta, long T_delta, double L) {
  if (!(delta > 0.0) || T_delta < 1 || !(L > 0.0)) {
    fail(ErrorCode::ValidationError, "solve_epsilon_delta needs delta > 0, T >= 1, L > 0");
  }
  const double target = delta / 4.0;

  // Bracket the root; nu is increasing from nu(0) = 0.
  double lo = 0.0;
  double hi = 1e-12;
  double nu_prev = 0.0;
  while (nu_fn(hi, L, T_delta) < target) {
    const double nu_hi = nu_fn(hi, L, T_delta);
    if (nu_hi < nu_prev) fail(ErrorCode::BracketFailure, "nu is not increasing on the bracket");
    nu_prev = nu_hi;
    lo = hi;
    hi *= 2.0;
    if (hi > 1e30) fail(ErrorCode::BracketFailure, "no finite bracket for nu(eps) = delta/4");
  }

  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 500; ++it) {
    mid = 0.5 * (lo + hi);
    const double r = nu_fn(mid, L, T_delta) - target;
    if (std::abs(r) <= 1e-12) return mid;
    if (r > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= std::numeric_limits<double>::denorm_min()) break;
  }
  if (std::abs(nu_fn(mid, L, T_delta) - target) > 1e-12) {
    fail(ErrorCode::BracketFailure, "bisection stalled before reaching the 1e-12 residual");
  }
  return mid;
}

BoundConstants derive_constants(const QuadraticLyapunov& cert, double L, double delta,
                                const SigmaFn& sigma) {
  if (!(delta > 0.0)) fail(ErrorCode::ValidationError, "delta must be positive");
  if (!(delta < cert.c3 / cert.c4)) {
    fail(ErrorCode::DeltaTooLarge, "delta must be below c3/c4 = " +
                                       std::to_string(cert.c3 / cert.c4) +
                                       " to keep the drift coefficient positive");
  }

  BoundConstants out;
  out.delta = delta;
  out.L = L;
  out.T_star = select_T_delta(delta, sigma);
  out.eps_delta = solve_epsilon_delta(delta, out.T_star, L);

  const double T = static_cast<double>(out.T_star);
  const double el = out.eps_delta * L;

  out.c1p = cert.c1;
  out.c2p = 2.0 * cert.c2 * T * (2.0 + (2.0 * T - 1.0) * pow1p(el, 2.0 * T - 2.0) * el) /
            (2.0 + el);
  double sum = 0.0;
  for (long j = 1; j <= out.T_star - 1; ++j) {
    const double jd = static_cast<double>(j);
    const double term = 1.0 + 0.5 * (jd - 1.0) * pow1p(el, jd - 2.0);
    sum += jd * jd * term * term;
  }
  out.c2pp = 2.0 * cert.c2 * sum;
  out.c3p = L * T * (cert.c3 - cert.c4 * delta);
  out.c4p = cert.c4 * L * T * (2.0 * L * pow1p(el, T - 2.0) + 16.0 * L * T);
  out.c5p = 2.0 * cert.c4 * L * T;
  out.c4pp = out.c4p + out.c3p * out.c2pp * out.eps_delta * L * L / out.c2p;
  out.c6 = out.c2p * (out.c4pp + out.c5p) / out.c3p;
  return out;
}

long k_epsilon(const BoundConstants& constants, double epsilon, const SigmaFn& sigma, long cap) {
  if (!(epsilon > 0.0 && epsilon < constants.eps_delta)) {
    fail(ErrorCode::StepsizeTooLarge, "epsilon must lie in (0, eps_delta)");
  }
  for (long k = 1; k <= cap; ++k) {
    if (sigma(constants.T_star, k) <= epsilon) return k;
  }
  fail(ErrorCode::CapExceeded, "sigma(T*;k) stays above epsilon up to the scan cap");
}

BoundCurve bound_curve(const BoundConstants& constants, double epsilon, double theta0_norm,
                       int K, const SigmaFn& sigma) {
  if (!(epsilon > 0.0 && epsilon < constants.eps_delta)) {
    fail(ErrorCode::StepsizeTooLarge, "epsilon must lie in (0, eps_delta = " +
                                          std::to_string(constants.eps_delta) + ")");
  }
  const double a = 1.0 - constants.c3p * epsilon / constants.c2p;
  if (!(a > 0.0 && a < 1.0)) {
    fail(ErrorCode::StepsizeTooLarge, "contraction factor 1 - c3' eps / c2' leaves (0,1)");
  }

  BoundCurve curve;
  curve.epsilon = epsilon;
  curve.k_eps = k_epsilon(constants, epsilon, sigma);
  curve.contraction = a;
  curve.transient_coeff = constants.c2p / constants.c1p * theta0_norm * theta0_norm;
  curve.steady = (constants.c2pp * constants.L * constants.L * epsilon * epsilon +
                  constants.c6 * epsilon) /
                 constants.c1p;
  curve.delta_coeff = constants.c6 * constants.delta / constants.c1p;

  curve.values.resize(K + 1);
  double a_k = 1.0;        // a^k
  double a_tail = 1.0;     // a^{max(k - k_eps, 0)}
  for (int k = 0; k <= K; ++k) {
    curve.values[k] = curve.transient_coeff * a_k + curve.steady + curve.delta_coeff * a_tail;
    a_k *= a;
    if (k >= curve.k_eps) a_tail *= a;
  }
  return curve;
}

double multistep_lyapunov(const QuadraticLyapunov& cert, const Trajectory& traj, int k, int T) {
  if (T < 1 || k < 0 || k + T - 1 > traj.length()) {
    fail(ErrorCode::IndexOutOfRange, "multistep window leaves the trajectory");
  }
  double sum = 0.0;
  for (int j = k; j <= k + T - 1; ++j) sum += cert.value(traj.thetas[j]);
  return sum;
}

double g_residual(const Trajectory& traj, const StepMap& map, int k, int T) {
  if (T < 1 || k < 0 || k + T > traj.length()) {
    fail(ErrorCode::IndexOutOfRange, "residual window leaves the trajectory");
  }
  // Accumulated the same way the simulator applies updates, so the T = 1
  // residual cancels exactly.
  VectorXd predicted = traj.thetas[k];
  VectorXd fx(map.dim());
  for (int j = k; j <= k + T - 1; ++j) {
    map.f(traj.thetas[k], traj.noise[j], fx);
    predicted += traj.epsilon * fx;
  }
  return (traj.thetas[k + T] - predicted).norm();
}

double gprime_residual(const Trajectory& traj, const StepMap& map, int k, int T) {
  if (T < 1 || k < 0 || k + T > traj.length()) {
    fail(ErrorCode::IndexOutOfRange, "residual window leaves the trajectory");
  }
  return (traj.thetas[k + T] - traj.thetas[k] -
          traj.epsilon * static_cast<double>(T) * map.f_bar(traj.thetas[k]))
      .norm();
}

DriftReport drift_check(const StepMap& map, const NoiseProcess& noise,
                        const QuadraticLyapunov& cert, const BoundConstants& constants,
                        double epsilon, const std::vector<DriftPoint>& points,
                        int n_continuations, std::uint64_t seed, const SigmaFn& sigma,
                        int n_threads) {
  if (!(epsilon > 0.0 && epsilon < constants.eps_delta)) {
    fail(ErrorCode::StepsizeTooLarge, "epsilon must lie in (0, eps_delta)");
  }
  if (n_continuations < 2) fail(ErrorCode::ValidationError, "need at least 2 continuations");

  const long T_star = constants.T_star;
  const int workers = resolve_threads(n_threads);
  const int block = 256;

  DriftReport report;
  report.points.reserve(points.size());

  std::vector<double> buffer(block);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const DriftPoint& point = points[p];
    const double w0 = cert.value(point.theta);
    const std::uint64_t point_seed = derive_stream_seed(seed, p);

    PairwiseSum sum, sum_sq;
    for (int begin = 0; begin < n_continuations; begin += block) {
      const int count = std::min(block, n_continuations - begin);
      parallel_for(count, workers, [&](long slot) {
        Rng rng(derive_stream_seed(point_seed, begin + slot));
        VectorXd theta = point.theta;
        VectorXd direction(map.dim());
        int x = point.x;
        for (long t = 0; t < T_star; ++t) {
          map.f(theta, x, direction);
          theta += epsilon * direction;
          x = noise.next(x, rng);
        }
        buffer[slot] = cert.value(theta) - w0;
      });
      for (int slot = 0; slot < count; ++slot) {
        sum.add(buffer[slot]);
        sum_sq.add(buffer[slot] * buffer[slot]);
      }
    }

    const double n = static_cast<double>(n_continuations);
    const double mean = sum.total() / n;
    double var = (sum_sq.total() - sum.total() * mean) / (n - 1.0);
    if (var < 0.0) var = 0.0;

    DriftPointResult result;
    result.point = point;
    result.estimate = mean;
    result.std_error = std::sqrt(var / n);
    result.ceiling = -epsilon * constants.c3p * point.theta.squaredNorm() +
                     constants.c4p * epsilon * epsilon +
                     constants.c5p * sigma(T_star, point.k) * epsilon;
    result.pass = result.estimate <= result.ceiling + 3.0 * result.std_error;
    if (result.pass) ++report.n_pass;
    report.points.push_back(std::move(result));
  }
  report.pass = report.n_pass == static_cast<int>(report.points.size());
  return report;
}

}  // namespace salab
