#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Variances of the linearized fluctuations z_j = x_j - xi around the well at t.
struct FluctuationPoint {
  double t = 0.0;
  double var_mean = 0.0;         ///< (sigma^2 / N)(1 - e^{-4 h t})
  double var_agent_limit = 0.0;  ///< (sigma^2 / 2(theta + 2h))(1 - e^{-2(theta + 2h) t})
  double var_mean_exact = 0.0;   ///< (sigma^2 / N)(1 - e^{-4 h t}) / (4h), or sigma^2 t / N at h = 0
  double var_agent_exact = 0.0;  ///< finite-N variance of one agent
};

FluctuationPoint linearized_variances(const ModelParams& p, double t);

/// Thresholds under which the linearization is taken as valid.
inline constexpr double kMeanVarianceSmall = 0.1;
inline constexpr double kAgentVarianceSmall = 0.25;

struct FluctuationReport {
  std::vector<FluctuationPoint> points;
  double stationary_var_mean = 0.0;   ///< sigma^2 / N
  double stationary_var_agent = 0.0;  ///< sigma^2 / 2(theta + 2h)
  bool mean_regime_ok = false;        ///< sigma^2 / N < kMeanVarianceSmall
  bool agent_regime_ok = false;       ///< sigma^2 / 2(theta + 2h) < kAgentVarianceSmall
};

FluctuationReport fluctuation_report(const ModelParams& p, const std::vector<double>& times);

struct FluctuationSample {
  FluctuationPoint closed_form;
  double var_mean_mc = 0.0;
  double var_agent_mc = 0.0;
  double se_mean = 0.0;   ///< standard error of var_mean_mc
  double se_agent = 0.0;  ///< standard error of var_agent_mc
};

struct FluctuationValidation {
  int replicas = 0;
  std::uint64_t seed = 0;
  std::vector<FluctuationSample> samples;
  std::vector<std::string> warnings;
};

/// Monte Carlo of dz_j = -(theta + 2h) z_j dt + theta zbar dt + sigma dw_j from z = 0 with
/// N agents on the dt grid. Each step uses the exact Gaussian transition of the linear system:
/// zbar is OU with rate 2h driven by the averaged noise, z_j - zbar is OU with rate theta + 2h
/// driven by the centred noise. Requested times are rounded to the nearest grid point.
FluctuationValidation validate_fluctuations(const ModelParams& p, int replicas, std::uint64_t seed,
                                            const std::vector<double>& times, int threads = 1);

struct RiskRow {
  ModelParams params;
  double spread = 0.0;               ///< sigma^2 / 2 theta
  double individual_variance = 0.0; ///< sigma^2 / 2(theta + 2h)
  double xi_b = 0.0;
  double systemic_rate = 0.0;        ///< 2 xi_b^2 / (sigma^2 T)
  double log_probability = 0.0;      ///< -N rate
  double probability = 0.0;
  /// Same spread as the previous row with larger sigma, and a smaller exponent N rate.
  bool systemic_risk_rises = false;
};

/// Rows sorted by (spread, sigma). Every grid point must be bistable.
std::vector<RiskRow> risk_comparison_report(const std::vector<ModelParams>& grid);

}  // namespace mfrisk
