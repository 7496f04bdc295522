#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Small-h expansion xi_b = xi0 + h xi1 + O(h^2).
struct SmallHExpansion {
  double xi0 = 0.0;
  double xi1 = 0.0;

  double at(double h) const { return xi0 + h * xi1; }
};

enum class EquilibriumMethod { FixedPoint, SmallHExpansion };

std::string to_string(EquilibriumMethod m);

struct EquilibriumSolution {
  double xi_b = 0.0;                            ///< positive equilibrium mean, 0 if not bistable
  std::optional<SmallHExpansion> xi_small_h;    ///< empty outside the expansion regime; xi1 is NaN for the group model
  double sigma_c = 0.0;                         ///< leading-order critical noise
  bool bistable = false;
  EquilibriumMethod method = EquilibriumMethod::FixedPoint;
  double residual = 0.0;                        ///< |xi_b - m(xi_b)|
};

/// Uniform node grid on [y_min, y_max] with `points` nodes.
struct NodeGrid {
  double y_min = -4.0;
  double y_max = 4.0;
  int points = 801;
};

struct GridDensity {
  Eigen::ArrayXd y;
  Eigen::ArrayXd u;

  double spacing() const { return y[1] - y[0]; }
  double trapezoid(const Eigen::ArrayXd& f) const;
  double mass() const { return trapezoid(u); }
  double mean() const { return trapezoid(y * u); }
};

/// Equilibrium density u^e_xi on a node grid, normalized to unit trapezoid mass.
/// Throws NumericalError if more than 1e-8 of the mass lies outside the grid.
GridDensity equilibrium_density(double xi, const ModelParams& p, const NodeGrid& grid);
/// Same for one group of the heterogeneous model (mean-reversion rate `theta`).
GridDensity equilibrium_density(double xi, double theta, double h, double sigma,
                                const NodeGrid& grid);

/// First two moments of u^e_xi for a group with rate theta.
struct DensityMoments {
  double mean = 0.0;
  double second = 0.0;
  double variance() const { return second - mean * mean; }
};
DensityMoments equilibrium_moments(double xi, double theta, double h, double sigma);

/// m(xi) for the homogeneous model (Gauss-Hermite with node doubling).
double consistency_map(double xi, const ModelParams& p);
/// m(xi) = sum_l rho_l int y u^e_{l,xi} for the heterogeneous model.
double consistency_map(double xi, const GroupSpec& g, double h, double sigma);

/// dm/dxi at xi via the covariance identity (2 theta / sigma^2) Var_{u^e_xi}(y).
double consistency_slope(double xi, const ModelParams& p);
double consistency_slope(double xi, const GroupSpec& g, double h, double sigma);
inline double consistency_slope_at_zero(const ModelParams& p) { return consistency_slope(0.0, p); }

/// Root of xi - m(xi) inside (lo, hi) with m(lo) - lo and m(hi) - hi of opposite signs.
double fixed_point_root(const ModelParams& p, double lo, double hi);
double fixed_point_root(const GroupSpec& g, double h, double sigma, double lo, double hi);

EquilibriumSolution solve_bistable(const ModelParams& p);
EquilibriumSolution solve_bistable_div(const HetModelParams& p);

/// Leading-order critical noise sqrt(2 theta / 3).
double critical_sigma_small_h(double theta, double h);
SmallHExpansion small_h_equilibrium(const ModelParams& p);

double critical_sigma_div(const GroupSpec& g, double h);
double small_h_equilibrium_div(const GroupSpec& g, double sigma);

/// Equilibrium obtained from the expansion alone (the h = 0 route).
EquilibriumSolution expansion_solution(const ModelParams& p);

/// xi_b used by the transition experiments: the fixed point when h > 0, xi0 at h = 0.
double equilibrium_mean(const ModelParams& p);
double equilibrium_mean(const HetModelParams& p);

}  // namespace mfrisk
