#include "mfrisk/diversity.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"
#include "mfrisk/quadrature.hpp"

namespace mfrisk {

namespace {

void check_scalars(double sigma, int n_agents, double horizon) {
  if (!(std::isfinite(sigma) && sigma > 0)) throw ParameterError("sigma must be positive");
  if (n_agents < 1) throw ParameterError("N must be at least 1");
  if (!(std::isfinite(horizon) && horizon > 0)) throw ParameterError("T must be positive");
}

}  // namespace

DiversityMatrices build_matrices(const GroupSpec& groups) {
  require_valid(groups, false);
  const Eigen::Index k = Eigen::Index(groups.size());
  DiversityMatrices out;
  out.rho = Eigen::Map<const Eigen::VectorXd>(groups.fractions.data(), k);
  const Eigen::Map<const Eigen::VectorXd> theta(groups.thetas.data(), k);
  out.M = theta * out.rho.transpose();
  out.M.diagonal() -= theta;
  out.R = out.rho.asDiagonal();

  const double scale = theta.maxCoeff();
  const double row_sum = (out.M * Eigen::VectorXd::Ones(k)).lpNorm<Eigen::Infinity>();
  const double quad_form = out.rho.dot(out.rho.cwiseQuotient(out.rho));
  if (row_sum > 1e-12 * scale || std::abs(quad_form - 1.0) > 1e-12)
    throw NumericalError("diversity matrices violate M 1 = 0 or rho^T R^-1 rho = 1");
  return out;
}

double sigma_T_squared(const GroupSpec& groups, double sigma, int n_agents, double horizon) {
  check_scalars(sigma, n_agents, horizon);
  const auto mats = build_matrices(groups);
  const Eigen::MatrixXd mt = mats.M.transpose();
  const Eigen::VectorXd inv_sqrt_rho = mats.rho.cwiseSqrt().cwiseInverse();
  auto integrand = [&](double s) {
    const Eigen::MatrixXd e = (mt * s).exp();
    return (inv_sqrt_rho.asDiagonal() * (e * mats.rho)).squaredNorm();
  };
  const auto q = integrate_adaptive(integrand, 0.0, horizon, 1e-10, 0.0);
  return sigma * sigma / n_agents * q.value;
}

DiverseTransition transition_probability_diverse(const GroupSpec& groups, double sigma,
                                                 int n_agents, double horizon,
                                                 std::optional<double> h) {
  check_scalars(sigma, n_agents, horizon);
  DiverseTransition out;
  if (h) {
    ModelParams base;
    base.h = *h;
    base.sigma = sigma;
    base.n_agents = n_agents;
    base.horizon = horizon;
    const auto sol = solve_bistable_div(make_het_params(base, groups));
    if (!sol.bistable) throw ParameterError("no bistable equilibria for the group model");
    out.xi_b = sol.xi_b;
  } else {
    out.xi_b = small_h_equilibrium_div(groups, sigma);
  }
  out.sigma_T2 = sigma_T_squared(groups, sigma, n_agents, horizon);
  out.log_probability = -2.0 * out.xi_b * out.xi_b / out.sigma_T2;
  out.probability = std::exp(out.log_probability);
  return out;
}

double DiversityPerturbation::spread() const {
  double acc = 0.0;
  for (std::size_t k = 0; k < alphas.size() && k < fractions.size(); ++k)
    acc += fractions[k] * alphas[k] * alphas[k];
  return acc;
}

GroupSpec DiversityPerturbation::to_groups() const {
  GroupSpec g;
  g.fractions = fractions;
  for (double a : alphas) g.thetas.push_back(theta_bar * (1.0 + delta * a));
  return g;
}

std::vector<ValidationIssue> validate(const DiversityPerturbation& pert) {
  std::vector<ValidationIssue> out;
  if (!(std::isfinite(pert.theta_bar) && pert.theta_bar > 0))
    out.push_back({"theta_bar", pert.theta_bar, "theta_bar must be positive"});
  if (!std::isfinite(pert.delta)) out.push_back({"delta", pert.delta, "delta must be finite"});
  if (pert.alphas.size() != pert.fractions.size() || pert.alphas.empty()) {
    out.push_back({"alphas", double(pert.alphas.size()),
                   "alphas and fractions must be non-empty and of equal length"});
    return out;
  }
  double weighted = 0.0;
  for (std::size_t k = 0; k < pert.alphas.size(); ++k)
    weighted += pert.fractions[k] * pert.alphas[k];
  if (!(std::abs(weighted) < 1e-12))
    out.push_back({"alphas", weighted, "sum rho_k alpha_k must vanish"});
  const auto g = pert.to_groups();
  for (double th : g.thetas)
    if (!(th > 0)) out.push_back({"alphas", th, "perturbed theta must be positive"});
  auto gi = validate(g, false);
  for (auto& issue : gi)
    if (issue.field == "groups.fraction" || issue.field == "groups") out.push_back(issue);
  return out;
}

void require_valid(const DiversityPerturbation& pert) {
  const auto issues = validate(pert);
  if (issues.empty()) return;
  std::ostringstream msg;
  for (std::size_t i = 0; i < issues.size(); ++i)
    msg << (i ? "; " : "") << issues[i].field << " = " << issues[i].value << ": "
        << issues[i].message;
  throw ParameterError(msg.str());
}

double mean_square_integral(double theta_bar, double horizon) {
  const double a = theta_bar;
  return horizon + 2.0 * std::expm1(-a * horizon) / a - std::expm1(-2.0 * a * horizon) / (2.0 * a);
}

DiversityExpansion diversity_expansion(const DiversityPerturbation& pert, double sigma,
                                       int n_agents, double horizon, ExpansionVariant variant) {
  require_valid(pert);
  check_scalars(sigma, n_agents, horizon);
  const double c = 3.0 * sigma * sigma / (2.0 * pert.theta_bar);
  if (!(c < 1.0)) throw ParameterError("no bistable equilibria: 3 sigma^2 / (2 theta_bar) >= 1");
  const double xi0_sq = 1.0 - c;
  const double d2s = pert.delta * pert.delta * pert.spread();
  const double avg = mean_square_integral(pert.theta_bar, horizon) / horizon;
  const double base = sigma * sigma * horizon / n_agents;

  DiversityExpansion out;
  out.sigma_T2 = base * (1.0 + d2s * avg);
  if (variant == ExpansionVariant::Published) {
    out.xi_b2 = xi0_sq - d2s * c;
    out.log_p_T = -2.0 / base * (xi0_sq - d2s * (c + avg));
  } else {
    out.xi_b2 = xi0_sq - 2.0 * d2s * c;
    out.log_p_T = -2.0 / base * (xi0_sq - d2s * (2.0 * c + xi0_sq * avg));
  }
  return out;
}

}  // namespace mfrisk
