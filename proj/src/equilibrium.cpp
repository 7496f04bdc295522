#include "mfrisk/equilibrium.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mfrisk/errors.hpp"
#include "mfrisk/quadrature.hpp"

namespace mfrisk {

namespace {

constexpr int kInitialNodes = 64;
constexpr int kMaxNodes = 512;
constexpr double kNodeTolerance = 1e-9;
constexpr double kResidualTolerance = 1e-10;
constexpr double kBracketTop = 1.5;

// Moments of y under u^e_xi for one group, at a fixed rule size. The residual
// weight is shifted by min V = -1/4 so it never exceeds one.
DensityMoments moments_at(double xi, double theta, double h, double sigma, int nodes) {
  const double sd = sigma / std::sqrt(2.0 * theta);
  const double eta = 2.0 * h / (sigma * sigma);
  double z = 0.0, c1 = 0.0, c2 = 0.0;
  const auto& rule = gauss_hermite(nodes);
  const double scale = std::sqrt(2.0) * sd;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    const double dy = scale * rule.nodes[i];
    const double w = rule.weights[i] * std::exp(-eta * (potential_V(xi + dy) + 0.25));
    z += w;
    c1 += w * dy;
    c2 += w * dy * dy;
  }
  c1 /= z;
  c2 /= z;
  return {xi + c1, (c2 - c1 * c1) + (xi + c1) * (xi + c1)};
}

DensityMoments converged_moments(double xi, double theta, double h, double sigma) {
  if (h == 0.0) return moments_at(xi, theta, h, sigma, kInitialNodes);
  DensityMoments prev = moments_at(xi, theta, h, sigma, kInitialNodes);
  for (int n = 2 * kInitialNodes; n <= kMaxNodes; n *= 2) {
    DensityMoments next = moments_at(xi, theta, h, sigma, n);
    if (std::abs(next.mean - prev.mean) < kNodeTolerance &&
        std::abs(next.variance() - prev.variance()) < kNodeTolerance)
      return next;
    prev = next;
  }
  std::ostringstream msg;
  msg << "Gauss-Hermite quadrature did not converge at xi = " << xi << " (theta = " << theta
      << ", h = " << h << ", sigma = " << sigma << ")";
  throw NumericalError(msg.str());
}

template <typename Map, typename Slope>
double find_root(Map&& m, Slope&& slope, double lo, double hi) {
  double glo = m(lo) - lo, ghi = m(hi) - hi;
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0) == (ghi > 0)) {
    std::ostringstream msg;
    msg << "no sign change of m(xi) - xi on [" << lo << ", " << hi << "]";
    throw NumericalError(msg.str());
  }
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    const double g = m(mid) - mid;
    if ((g > 0) == (glo > 0)) {
      lo = mid;
      glo = g;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  double g = m(x) - x;
  for (int it = 0; it < 50 && std::abs(g) >= 1e-13; ++it) {
    const double d = slope(x) - 1.0;
    double next = (d != 0.0) ? x - g / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double gn = m(next) - next;
    if ((gn > 0) == (glo > 0)) lo = next; else hi = next;
    if (std::abs(gn) >= std::abs(g) && std::abs(g) < kResidualTolerance) break;
    x = next;
    g = gn;
  }
  if (!(std::abs(g) < kResidualTolerance)) {
    std::ostringstream msg;
    msg << "fixed-point refinement stalled with residual " << std::abs(g);
    throw NumericalError(msg.str());
  }
  return x;
}

template <typename Map, typename Slope>
double positive_root(Map&& m, Slope&& slope) {
  if (!(m(kBracketTop) - kBracketTop < 0))
    throw NumericalError("no sign change of m(xi) - xi on (0, 1.5] despite slope > 1");
  double hi = kBracketTop, lo = 0.5 * kBracketTop;
  for (int i = 0; i < 60 && !(m(lo) - lo > 0); ++i) {
    hi = lo;
    lo *= 0.5;
  }
  if (!(m(lo) - lo > 0))
    throw NumericalError("no sign change of m(xi) - xi on (0, 1.5] despite slope > 1");
  return find_root(m, slope, lo, hi);
}

double spread_ratio(double theta, double sigma) { return sigma * sigma / (2.0 * theta); }

}  // namespace

std::string to_string(EquilibriumMethod m) {
  return m == EquilibriumMethod::FixedPoint ? "fixed-point" : "small-h-expansion";
}

double GridDensity::trapezoid(const Eigen::ArrayXd& f) const {
  const Eigen::Index n = f.size();
  return spacing() * (f.sum() - 0.5 * (f[0] + f[n - 1]));
}

GridDensity equilibrium_density(double xi, double theta, double h, double sigma,
                                const NodeGrid& grid) {
  if (grid.points < 3 || !(grid.y_max > grid.y_min))
    throw ParameterError("density grid needs y_max > y_min and at least 3 points");
  const double v = spread_ratio(theta, sigma);
  const double eta = 2.0 * h / (sigma * sigma);
  GridDensity out;
  out.y = Eigen::ArrayXd::LinSpaced(grid.points, grid.y_min, grid.y_max);
  out.u = out.y.unaryExpr([&](double y) {
    return std::exp(-(y - xi) * (y - xi) / (2.0 * v) - eta * (potential_V(y) + 0.25)) /
           std::sqrt(2.0 * M_PI * v);
  });
  const double on_grid = out.mass();
  const double total = gaussian_expectation(
      [&](double y) { return std::exp(-eta * (potential_V(y) + 0.25)); }, xi, std::sqrt(v), 128);
  const double tail = 1.0 - on_grid / total;
  if (tail > 1e-8) {
    std::ostringstream msg;
    msg << "density grid too narrow: tail mass " << tail << " outside [" << grid.y_min << ", "
        << grid.y_max << "]";
    throw NumericalError(msg.str());
  }
  out.u /= on_grid;
  return out;
}

GridDensity equilibrium_density(double xi, const ModelParams& p, const NodeGrid& grid) {
  return equilibrium_density(xi, p.theta, p.h, p.sigma, grid);
}

DensityMoments equilibrium_moments(double xi, double theta, double h, double sigma) {
  return converged_moments(xi, theta, h, sigma);
}

double consistency_map(double xi, const ModelParams& p) {
  return converged_moments(xi, p.theta, p.h, p.sigma).mean;
}

double consistency_map(double xi, const GroupSpec& g, double h, double sigma) {
  double acc = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l)
    acc += g.fractions[l] * converged_moments(xi, g.thetas[l], h, sigma).mean;
  return acc;
}

double consistency_slope(double xi, const ModelParams& p) {
  return 2.0 * p.theta / (p.sigma * p.sigma) *
         converged_moments(xi, p.theta, p.h, p.sigma).variance();
}

double consistency_slope(double xi, const GroupSpec& g, double h, double sigma) {
  double acc = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l)
    acc += g.fractions[l] * 2.0 * g.thetas[l] / (sigma * sigma) *
           converged_moments(xi, g.thetas[l], h, sigma).variance();
  return acc;
}

double fixed_point_root(const ModelParams& p, double lo, double hi) {
  return find_root([&](double x) { return consistency_map(x, p); },
                   [&](double x) { return consistency_slope(x, p); }, lo, hi);
}

double fixed_point_root(const GroupSpec& g, double h, double sigma, double lo, double hi) {
  return find_root([&](double x) { return consistency_map(x, g, h, sigma); },
                   [&](double x) { return consistency_slope(x, g, h, sigma); }, lo, hi);
}

double critical_sigma_small_h(double theta, double /*h*/) { return std::sqrt(2.0 * theta / 3.0); }

SmallHExpansion small_h_equilibrium(const ModelParams& p) {
  if (!(p.theta > 0)) throw ParameterError("no bistable equilibria: theta must be positive");
  const double s = spread_ratio(p.theta, p.sigma);
  if (!(3.0 * s < 1.0)) {
    std::ostringstream msg;
    msg << "no bistable equilibria: 3 sigma^2 / (2 theta) = " << 3.0 * s << " >= 1";
    throw ParameterError(msg.str());
  }
  const double xi0 = std::sqrt(1.0 - 3.0 * s);
  const double xi1 =
      xi0 * (6.0 / (p.sigma * p.sigma)) * s * s * (1.0 - 2.0 * s) / (1.0 - 3.0 * s);
  return {xi0, xi1};
}

double critical_sigma_div(const GroupSpec& g, double /*h*/) {
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    num += g.fractions[l] / g.thetas[l];
    den += 3.0 * g.fractions[l] / (2.0 * g.thetas[l] * g.thetas[l]);
  }
  return std::sqrt(num / den);
}

double small_h_equilibrium_div(const GroupSpec& g, double sigma) {
  const double sc = critical_sigma_div(g, 0.0);
  if (!(sigma < sc)) {
    std::ostringstream msg;
    msg << "no bistable equilibria: sigma = " << sigma << " >= sigma_c^div = " << sc;
    throw ParameterError(msg.str());
  }
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    const double w = g.fractions[l] / g.thetas[l];
    num += w * (1.0 - 3.0 * spread_ratio(g.thetas[l], sigma));
    den += w;
  }
  return std::sqrt(num / den);
}

EquilibriumSolution solve_bistable(const ModelParams& p) {
  require_valid(p);
  if (p.h == 0.0) throw ParameterError("degenerate at h=0; use expansion");
  EquilibriumSolution sol;
  sol.method = EquilibriumMethod::FixedPoint;
  sol.sigma_c = critical_sigma_small_h(p.theta, p.h);
  if (p.theta > 0 && 3.0 * p.spread() < 1.0) sol.xi_small_h = small_h_equilibrium(p);
  if (!(p.theta > 0) || consistency_slope_at_zero(p) <= 1.0) return sol;
  const double xi = positive_root([&](double x) { return consistency_map(x, p); },
                                  [&](double x) { return consistency_slope(x, p); });
  sol.xi_b = xi;
  sol.bistable = true;
  sol.residual = std::abs(xi - consistency_map(xi, p));
  return sol;
}

EquilibriumSolution solve_bistable_div(const HetModelParams& p) {
  require_valid(p);
  const auto& g = p.groups;
  const double h = p.base.h, sigma = p.base.sigma;
  if (h == 0.0) throw ParameterError("degenerate at h=0; use expansion");
  EquilibriumSolution sol;
  sol.method = EquilibriumMethod::FixedPoint;
  sol.sigma_c = critical_sigma_div(g, h);
  if (sigma < sol.sigma_c) sol.xi_small_h =
        SmallHExpansion{small_h_equilibrium_div(g, sigma), std::numeric_limits<double>::quiet_NaN()};
  if (consistency_slope(0.0, g, h, sigma) <= 1.0) return sol;
  const double xi = positive_root([&](double x) { return consistency_map(x, g, h, sigma); },
                                  [&](double x) { return consistency_slope(x, g, h, sigma); });
  sol.xi_b = xi;
  sol.bistable = true;
  sol.residual = std::abs(xi - consistency_map(xi, g, h, sigma));
  return sol;
}

EquilibriumSolution expansion_solution(const ModelParams& p) {
  EquilibriumSolution sol;
  sol.method = EquilibriumMethod::SmallHExpansion;
  sol.sigma_c = critical_sigma_small_h(p.theta, p.h);
  if (!(p.theta > 0) || !(3.0 * p.spread() < 1.0)) return sol;
  sol.xi_small_h = small_h_equilibrium(p);
  sol.xi_b = sol.xi_small_h->at(p.h);
  sol.bistable = true;
  sol.residual = std::abs(sol.xi_b - consistency_map(sol.xi_b, p));
  return sol;
}

double equilibrium_mean(const ModelParams& p) {
  if (p.h == 0.0) return small_h_equilibrium(p).xi0;
  const auto sol = solve_bistable(p);
  if (!sol.bistable) throw ParameterError("parameters are not in the bistable regime");
  return sol.xi_b;
}

double equilibrium_mean(const HetModelParams& p) {
  if (p.base.h == 0.0) return small_h_equilibrium_div(p.groups, p.base.sigma);
  const auto sol = solve_bistable_div(p);
  if (!sol.bistable) throw ParameterError("parameters are not in the bistable regime");
  return sol.xi_b;
}

}  // namespace mfrisk
