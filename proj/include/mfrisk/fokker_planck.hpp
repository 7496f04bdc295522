#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Cell-centred density on [y_min, y_max].
struct DensityGrid {
  double y_min = -4.0;
  double y_max = 4.0;
  Eigen::ArrayXd values;
  double time = 0.0;

  Eigen::Index cells() const { return values.size(); }
  double spacing() const { return (y_max - y_min) / double(values.size()); }
  Eigen::ArrayXd centers() const;
  double mass() const { return values.sum() * spacing(); }
  double moment(int order) const;

  /// Samples f at the cell centres and rescales to unit mass.
  static DensityGrid sample(double y_min, double y_max, int cells,
                            const std::function<double(double)>& f);
  static DensityGrid gaussian(double mean, double variance, double y_min = -4.0,
                              double y_max = 4.0, int cells = 800);
};

/// L1 distance between two densities on the same grid.
double l1_distance(const DensityGrid& a, const DensityGrid& b);

struct FpDiagnostics {
  long substeps = 0;
  double min_dt = 0.0;
  double max_clipped_mass = 0.0;  ///< largest mass removed by clipping in one substep
  double min_value = 0.0;         ///< most negative pre-clipping value seen
  double max_mass_error = 0.0;    ///< max |mass - 1| over the run
};

struct FpOptions {
  double cfl = 0.9;
  double leakage_tolerance = 1e-6;   ///< max mass allowed in a boundary cell
  double min_substep = 1e-9;
  /// Called with the current densities every `snapshot_every` time units (and at t_end).
  double snapshot_every = 0.0;
  std::function<void(const std::vector<DensityGrid>&)> on_snapshot;
  FpDiagnostics* diagnostics = nullptr;
};

/// Conservative finite-volume solve of
///   u_t = h (U u)_y - theta ((int y u - y) u)_y + sigma^2/2 u_yy
/// with exponentially fitted (Scharfetter-Gummel) fluxes, zero-flux walls and
/// CFL-limited explicit substeps. The nonlocal mean is refreshed every substep.
DensityGrid evolve_fp(const DensityGrid& initial, const ModelParams& p, double t_end,
                      const FpOptions& opts = {});

/// Coupled system for K groups sharing the mean int y sum_l rho_l u_l.
std::vector<DensityGrid> evolve_fp_system(const std::vector<DensityGrid>& initials,
                                          const GroupSpec& groups, double sigma, double h,
                                          double t_end, const FpOptions& opts = {});

/// u^e_xi sampled on cell centres.
DensityGrid equilibrium_grid(double xi, double theta, double h, double sigma, double y_min = -4.0,
                             double y_max = 4.0, int cells = 800);

}  // namespace mfrisk
