#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfrisk {

/// Parameters of the homogeneous bistable mean-field system
///
///   dx_j = -h U(x_j) dt + theta (xbar - x_j) dt + sigma dw_j,   j = 1..N
///
/// together with the Euler discretization controls.
struct ModelParams {
  double h = 0.1;        ///< depth of the double-well potential
  double theta = 10.0;   ///< mean-reversion (cooperation) rate
  double sigma = 1.0;    ///< noise strength
  int n_agents = 100;    ///< N
  double horizon = 100;  ///< T
  double dt = 0.02;      ///< Euler step

  /// sigma^2 / (2 theta): the stationary variance of one agent around the mean at h = 0.
  double spread() const { return sigma * sigma / (2.0 * theta); }
};

/// K groups of agents with mean-reversion rates thetas[l] held by a fraction fractions[l].
struct GroupSpec {
  std::vector<double> thetas;
  std::vector<double> fractions;

  std::size_t size() const { return thetas.size(); }
  double mean_theta() const;
};

/// Heterogeneous model: base.theta is ignored in the dynamics and set to the group mean.
struct HetModelParams {
  ModelParams base;
  GroupSpec groups;
};

struct SystemState {
  Eigen::VectorXd positions;
  double time = 0.0;

  double empirical_mean() const { return positions.mean(); }
};

template <typename Scalar>
Scalar force_U(Scalar y) {
  return y * y * y - y;
}

template <typename Scalar>
Scalar potential_V(Scalar y) {
  const Scalar y2 = y * y;
  return y2 * y2 / Scalar(4) - y2 / Scalar(2);
}

/// Largest accepted dt * max(theta, 1) for the explicit schemes.
inline constexpr double kStabilityLimit = 0.25;

struct ValidationIssue {
  std::string field;
  double value = 0.0;
  std::string message;
};

std::vector<ValidationIssue> validate(const ModelParams& p);
/// `require_distinct = false` accepts tied rates (degenerate groups, used by the coupled solvers).
std::vector<ValidationIssue> validate(const GroupSpec& g, bool require_distinct = true);
std::vector<ValidationIssue> validate(const HetModelParams& p);

/// Throws ParameterError listing every violated invariant.
void require_valid(const ModelParams& p);
void require_valid(const GroupSpec& g, bool require_distinct = true);
void require_valid(const HetModelParams& p);

/// Copies the base parameters and replaces theta with the group mean.
HetModelParams make_het_params(const ModelParams& base, const GroupSpec& groups);

}  // namespace mfrisk
