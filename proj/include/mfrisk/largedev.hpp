#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Path of the mean a(t) on a uniform grid over [0, T].
struct MeanPath {
  Eigen::VectorXd times;
  Eigen::VectorXd values;

  double step() const { return times[1] - times[0]; }
  double horizon() const { return times[times.size() - 1]; }

  /// a(t) = -xi + 2 xi t / T on `intervals` intervals.
  static MeanPath linear(double xi, double horizon, int intervals);
};

enum class RateMethod { H0ClosedForm, SmallHClosedForm, ReducedMinimization, GaussianPath, Bvp };

std::string to_string(RateMethod m);
RateMethod rate_method_from_string(const std::string& s);

struct RateEstimate {
  double value = 0.0;
  RateMethod method = RateMethod::H0ClosedForm;
  std::optional<MeanPath> path;
  int iterations = 0;           ///< Newton iterations (minimization only)
  double el_residual = 0.0;     ///< inf-norm of the discrete Euler-Lagrange equations

  double implied_log_probability(int n_agents) const { return -double(n_agents) * value; }
};

struct TransitionProbability {
  double probability = 0.0;
  double log_probability = 0.0;
};

/// Drift of the reduced dynamics: a^3 + 3 s a - a with s = sigma^2 / (2 theta).
template <typename Scalar>
Scalar reduced_drift(Scalar a, Scalar s) {
  return a * a * a + Scalar(3) * s * a - a;
}

/// E[y^3 - y] and E[(y^3 - y)^2] for y ~ Normal(a, v), from central moments up to order 6.
template <typename Scalar>
struct GaussianForceMoments {
  Scalar mean;
  Scalar second;
};

template <typename Scalar>
GaussianForceMoments<Scalar> gaussian_force_moments(Scalar a, Scalar v) {
  const Scalar a2 = a * a;
  const Scalar m2 = a2 + v;
  const Scalar m4 = a2 * a2 + Scalar(6) * a2 * v + Scalar(3) * v * v;
  const Scalar m6 = a2 * a2 * a2 + Scalar(15) * a2 * a2 * v + Scalar(45) * a2 * v * v +
                    Scalar(15) * v * v * v;
  return {a2 * a + Scalar(3) * v * a - a, m6 - Scalar(2) * m4 + m2};
}

/// Minimum of the h = 0 rate function: 2 xi0^2 / (sigma^2 T).
double rate_h0(double xi0, double sigma, double horizon);

/// (2 xi0 / (sigma^2 T)) (xi0 + 2 h xi1), the rate through first order in h.
double rate_small_h(const ModelParams& p, double horizon);

/// (1 / 2 sigma^2) int (a' + h (a^3 + 3 s a - a))^2 dt with interval forward differences
/// and a trapezoid over each interval's endpoints.
double reduced_rate_functional(const MeanPath& path, const ModelParams& p);

/// Same discretization with the Gaussian-family integrand E_{N(a, s)}[(a' + h (y^3 - y))^2].
double gaussian_path_rate(const MeanPath& path, const ModelParams& p);

struct MinimizeOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
  int max_halvings = 30;
};

/// Endpoint used for the transition paths: the fixed point when h > 0, xi0 when h = 0.
double transition_endpoint(const ModelParams& p);

/// Damped Newton on the discretized reduced functional with endpoints pinned at -xi, +xi.
/// When `xi` is empty, transition_endpoint(p) is used.
RateEstimate minimize_reduced(const ModelParams& p, double horizon, int intervals,
                              std::optional<double> xi = std::nullopt,
                              const MinimizeOptions& opts = {});

/// Shooting for a'' = h^2 F(a) F'(a), a(0) = -xi, a(T) = xi, with F the reduced drift.
MeanPath optimal_path_bvp(const ModelParams& p, double horizon, int intervals,
                          std::optional<double> xi = std::nullopt);

/// Gradient of the discretized reduced functional with respect to the interior nodes.
Eigen::VectorXd reduced_functional_gradient(const MeanPath& path, const ModelParams& p);

TransitionProbability transition_probability_ld(const RateEstimate& rate, int n_agents);

}  // namespace mfrisk
