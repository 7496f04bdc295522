#pragma once

#include <functional>

#include <Eigen/Dense>

namespace mfrisk {

/// Gauss-Hermite rule for the weight exp(-x^2) on the real line.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Returns the n-point rule. Rules are computed once (Golub-Welsch) and cached;
/// the returned reference stays valid for the life of the program.
const GaussHermiteRule& gauss_hermite(int n);

/// E[f(Y)] for Y ~ Normal(mean, sd^2) with the n-point rule.
template <typename F>
double gaussian_expectation(F&& f, double mean, double sd, int n) {
  const auto& rule = gauss_hermite(n);
  const double scale = std::sqrt(2.0) * sd;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(mean + scale * rule.nodes[i]);
  return acc / std::sqrt(M_PI);
}

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
};

/// Adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
/// Throws NumericalError when the tolerance is not met within max_intervals subdivisions.
QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                    double rel_tol = 1e-10, double abs_tol = 1e-14,
                                    int max_intervals = 2000);

}  // namespace mfrisk
