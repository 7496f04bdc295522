#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Matrices of the h = 0 partial-average system d X = M X dt + (sigma / sqrt N) R^{-1/2} dW.
struct DiversityMatrices {
  Eigen::VectorXd rho;   ///< group fractions
  Eigen::MatrixXd M;     ///< M_ij = -theta_i (delta_ij - rho_j)
  Eigen::MatrixXd R;     ///< diag(rho)
};

/// Builds the matrices and checks M 1 = 0 and rho^T R^{-1} rho = 1.
/// Tied rates are accepted.
DiversityMatrices build_matrices(const GroupSpec& groups);

/// Variance of the mean at time T for the partial-average system started from a point:
///   (sigma^2 / N) int_0^T rho^T e^{M s} R^{-1} e^{M^T s} rho ds.
double sigma_T_squared(const GroupSpec& groups, double sigma, int n_agents, double horizon);

struct DiverseTransition {
  double probability = 0.0;
  double log_probability = 0.0;
  double xi_b = 0.0;
  double sigma_T2 = 0.0;
};

/// exp(-2 xi_b^2 / sigma_T^2) with the h -> 0 equilibrium xi_b^div.
/// Passing `h` replaces xi_b by the fixed point of the group model at that h
/// (exploratory; the formula itself is derived at h = 0).
DiverseTransition transition_probability_diverse(const GroupSpec& groups, double sigma,
                                                 int n_agents, double horizon,
                                                 std::optional<double> h = std::nullopt);

/// Rates theta_k = theta_bar (1 + delta alpha_k) with sum rho_k alpha_k = 0.
struct DiversityPerturbation {
  double theta_bar = 1.0;
  std::vector<double> alphas;
  std::vector<double> fractions;
  double delta = 0.0;

  /// Mean-zero spread sum rho_k alpha_k^2.
  double spread() const;
  GroupSpec to_groups() const;
};

std::vector<ValidationIssue> validate(const DiversityPerturbation& pert);
void require_valid(const DiversityPerturbation& pert);

/// int_0^T (1 - e^{-theta_bar s})^2 ds in closed form.
double mean_square_integral(double theta_bar, double horizon);

enum class ExpansionVariant {
  Published,  ///< coefficients as stated for the small-diversity expansion
  Rederived,  ///< coefficients from expanding the exact xi_b^div and sigma_T^2 to delta^2
};

struct DiversityExpansion {
  double xi_b2 = 0.0;
  double sigma_T2 = 0.0;
  double log_p_T = 0.0;
};

/// delta^2-truncated xi_b^2, sigma_T^2 and log p_T. Requires 3 sigma^2 / (2 theta_bar) < 1.
DiversityExpansion diversity_expansion(const DiversityPerturbation& pert, double sigma,
                                       int n_agents, double horizon,
                                       ExpansionVariant variant = ExpansionVariant::Published);

}  // namespace mfrisk
