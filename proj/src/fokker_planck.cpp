#include "mfrisk/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfrisk/errors.hpp"

namespace mfrisk {

namespace {

// Bernoulli function z / (e^z - 1).
inline double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

void check_compatible(const std::vector<DensityGrid>& grids) {
  if (grids.empty()) throw ParameterError("at least one density is required");
  for (const auto& g : grids) {
    if (g.cells() < 3) throw ParameterError("density grid needs at least 3 cells");
    if (g.y_min != grids[0].y_min || g.y_max != grids[0].y_max || g.cells() != grids[0].cells())
      throw ParameterError("coupled densities must share one grid");
    if (std::abs(g.mass() - 1.0) > 1e-8) {
      std::ostringstream msg;
      msg << "initial density is not normalized (mass " << g.mass() << ")";
      throw ParameterError(msg.str());
    }
  }
}

std::vector<DensityGrid> solve(std::vector<DensityGrid> u, const std::vector<double>& rates,
                               const std::vector<double>& weights, double sigma, double h,
                               double t_end, const FpOptions& opts) {
  check_compatible(u);
  if (!(sigma > 0)) throw ParameterError("sigma must be positive");
  const double t0 = u[0].time;
  if (t_end < t0) throw ParameterError("t_end precedes the initial time");

  const Eigen::Index n = u[0].cells();
  const double dy = u[0].spacing();
  const double diff = 0.5 * sigma * sigma;
  const Eigen::ArrayXd y = u[0].centers();
  const Eigen::ArrayXd v = y.unaryExpr([](double s) { return potential_V(s); });
  const std::size_t k = u.size();

  FpDiagnostics diag;
  diag.min_dt = std::numeric_limits<double>::infinity();
  Eigen::ArrayXd phi(n), b_plus(n - 1), b_minus(n - 1), flux(n + 1);
  std::vector<Eigen::ArrayXd> bp(k, Eigen::ArrayXd(n - 1)), bm(k, Eigen::ArrayXd(n - 1));

  double t = t0;
  double next_snapshot = opts.snapshot_every > 0 ? t0 + opts.snapshot_every : t_end;
  if (opts.on_snapshot) opts.on_snapshot(u);

  while (t < t_end) {
    double mean = 0.0;
    for (std::size_t l = 0; l < k; ++l) mean += weights[l] * (y * u[l].values).sum() * dy;

    double max_rate = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      phi = h * v + 0.5 * rates[l] * (y - mean).square();
      for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double z = (phi[i + 1] - phi[i]) / diff;
        bp[l][i] = bernoulli(z);
        bm[l][i] = bp[l][i] + z;  // B(-z) = B(z) + z
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double out = (i + 1 < n ? bp[l][i] : 0.0) + (i > 0 ? bm[l][i - 1] : 0.0);
        max_rate = std::max(max_rate, out);
      }
    }
    max_rate *= diff / (dy * dy);
    double dt = opts.cfl / max_rate;
    if (dt < opts.min_substep) {
      std::ostringstream msg;
      msg << "CFL substep " << dt << " below minimum " << opts.min_substep;
      throw NumericalError(msg.str());
    }
    diag.min_dt = std::min(diag.min_dt, dt);
    bool snapshot = false;
    if (t + dt >= next_snapshot) {
      dt = next_snapshot - t;
      snapshot = true;
    }

    for (std::size_t l = 0; l < k; ++l) {
      auto& w = u[l].values;
      flux[0] = flux[n] = 0.0;
      for (Eigen::Index i = 0; i + 1 < n; ++i)
        flux[i + 1] = diff / dy * (bp[l][i] * w[i] - bm[l][i] * w[i + 1]);
      w -= dt / dy * (flux.tail(n) - flux.head(n));

      const double low = w.minCoeff();
      diag.min_value = std::min(diag.min_value, low);
      if (low < 0) {
        const double before = w.sum();
        const double clipped = -(w < 0).select(w, 0.0).sum() * dy;
        w = w.max(0.0);
        w *= before / w.sum();
        diag.max_clipped_mass = std::max(diag.max_clipped_mass, clipped);
      }
      const double edge = std::max(w[0], w[n - 1]) * dy;
      if (edge > opts.leakage_tolerance) {
        std::ostringstream msg;
        msg << "boundary leakage: mass " << edge << " in an edge cell of [" << u[l].y_min << ", "
            << u[l].y_max << "]; widen the domain";
        throw NumericalError(msg.str());
      }
      diag.max_mass_error = std::max(diag.max_mass_error, std::abs(u[l].mass() - 1.0));
    }
    t = snapshot ? next_snapshot : t + dt;
    for (auto& g : u) g.time = t;
    ++diag.substeps;
    if (snapshot) {
      if (opts.on_snapshot) opts.on_snapshot(u);
      next_snapshot = (opts.snapshot_every > 0) ? std::min(t + opts.snapshot_every, t_end) : t_end;
      if (t >= t_end) break;
    }
  }
  if (opts.diagnostics) *opts.diagnostics = diag;
  return u;
}

}  // namespace

Eigen::ArrayXd DensityGrid::centers() const {
  const double dy = spacing();
  return Eigen::ArrayXd::LinSpaced(cells(), y_min + 0.5 * dy, y_max - 0.5 * dy);
}

double DensityGrid::moment(int order) const {
  return (centers().pow(order) * values).sum() * spacing();
}

DensityGrid DensityGrid::sample(double y_min, double y_max, int cells,
                                const std::function<double(double)>& f) {
  DensityGrid g;
  g.y_min = y_min;
  g.y_max = y_max;
  g.values = Eigen::ArrayXd::Zero(cells);
  g.values = g.centers().unaryExpr(f);
  g.values /= g.mass();
  return g;
}

DensityGrid DensityGrid::gaussian(double mean, double variance, double y_min, double y_max,
                                  int cells) {
  return sample(y_min, y_max, cells, [&](double y) {
    return std::exp(-(y - mean) * (y - mean) / (2.0 * variance));
  });
}

double l1_distance(const DensityGrid& a, const DensityGrid& b) {
  return (a.values - b.values).abs().sum() * a.spacing();
}

DensityGrid evolve_fp(const DensityGrid& initial, const ModelParams& p, double t_end,
                      const FpOptions& opts) {
  return solve({initial}, {p.theta}, {1.0}, p.sigma, p.h, t_end, opts).front();
}

std::vector<DensityGrid> evolve_fp_system(const std::vector<DensityGrid>& initials,
                                          const GroupSpec& groups, double sigma, double h,
                                          double t_end, const FpOptions& opts) {
  require_valid(groups, false);
  if (initials.size() != groups.size())
    throw ParameterError("one initial density per group is required");
  return solve(initials, groups.thetas, groups.fractions, sigma, h, t_end, opts);
}

DensityGrid equilibrium_grid(double xi, double theta, double h, double sigma, double y_min,
                             double y_max, int cells) {
  const double v = sigma * sigma / (2.0 * theta);
  const double eta = 2.0 * h / (sigma * sigma);
  return DensityGrid::sample(y_min, y_max, cells, [&](double y) {
    return std::exp(-(y - xi) * (y - xi) / (2.0 * v) - eta * (potential_V(y) + 0.25));
  });
}

}  // namespace mfrisk
