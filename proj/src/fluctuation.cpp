#include "mfrisk/fluctuation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"
#include "mfrisk/rng.hpp"
#include "mfrisk/simulate.hpp"

namespace mfrisk {

namespace {

// int_0^t e^{-2 rate s} ds
double ou_factor(double rate, double t) {
  if (rate == 0.0) return t;
  return -std::expm1(-2.0 * rate * t) / (2.0 * rate);
}

}  // namespace

FluctuationPoint linearized_variances(const ModelParams& p, double t) {
  if (!(t >= 0)) throw ParameterError("t must be nonnegative");
  const double s2 = p.sigma * p.sigma, n = p.n_agents, lam = p.theta + 2.0 * p.h;
  FluctuationPoint out;
  out.t = t;
  out.var_mean = s2 / n * -std::expm1(-4.0 * p.h * t);
  out.var_agent_limit = s2 * ou_factor(lam, t);
  out.var_mean_exact = s2 / n * ou_factor(2.0 * p.h, t);
  out.var_agent_exact = s2 * (1.0 - 1.0 / n) * ou_factor(lam, t) + out.var_mean_exact;
  return out;
}

FluctuationReport fluctuation_report(const ModelParams& p, const std::vector<double>& times) {
  FluctuationReport r;
  for (double t : times) r.points.push_back(linearized_variances(p, t));
  r.stationary_var_mean = p.sigma * p.sigma / p.n_agents;
  r.stationary_var_agent = p.sigma * p.sigma / (2.0 * (p.theta + 2.0 * p.h));
  r.mean_regime_ok = r.stationary_var_mean < kMeanVarianceSmall;
  r.agent_regime_ok = r.stationary_var_agent < kAgentVarianceSmall;
  return r;
}

FluctuationValidation validate_fluctuations(const ModelParams& p, int replicas, std::uint64_t seed,
                                            const std::vector<double>& times, int threads) {
  if (!(p.sigma >= 0) || p.n_agents < 1 || !(p.dt > 0) || !(p.theta >= 0) || !(p.h >= 0))
    throw ParameterError("fluctuation validation needs sigma >= 0, theta >= 0, h >= 0, N >= 1, dt > 0");
  if (replicas < 2) throw ParameterError("at least two replicas are required");
  FluctuationValidation out;
  out.replicas = replicas;
  out.seed = seed;
  const auto report = fluctuation_report(p, times);
  if (!report.mean_regime_ok)
    out.warnings.push_back("sigma^2/N is not small; the linearization may not apply");
  if (!report.agent_regime_ok)
    out.warnings.push_back("sigma^2/2(theta+2h) is not small; the linearization may not apply");

  std::vector<Eigen::Index> idx;
  for (double t : times) {
    if (!(t >= 0)) throw ParameterError("sample times must be nonnegative");
    idx.push_back(Eigen::Index(std::llround(t / p.dt)));
  }
  const Eigen::Index last = idx.empty() ? 0 : *std::max_element(idx.begin(), idx.end());

  const int n = p.n_agents;
  const double lam = p.theta + 2.0 * p.h;
  const double a_mean = std::exp(-2.0 * p.h * p.dt), a_dev = std::exp(-lam * p.dt);
  const double b_mean = p.sigma * std::sqrt(ou_factor(2.0 * p.h, p.dt) / p.dt);
  const double b_dev = p.sigma * std::sqrt(ou_factor(lam, p.dt) / p.dt);
  const double sqrt_dt = std::sqrt(p.dt);

  const std::size_t k = times.size();
  Eigen::MatrixXd zbar(replicas, k), z1(replicas, k);
  parallel_for(replicas, threads, [&](int r) {
    NormalStream stream(seed, std::uint64_t(r), StreamTag::Linearized);
    std::vector<double> g(n);
    Eigen::VectorXd dev = Eigen::VectorXd::Zero(n);
    double mean = 0.0;
    auto record = [&](Eigen::Index step) {
      for (std::size_t i = 0; i < k; ++i)
        if (idx[i] == step) {
          zbar(r, i) = mean;
          z1(r, i) = mean + dev[0];
        }
    };
    record(0);
    for (Eigen::Index step = 1; step <= last; ++step) {
      stream.fill(std::uint32_t(step - 1), g);
      double gbar = 0.0;
      for (double v : g) gbar += v;
      gbar /= n;
      mean = a_mean * mean + b_mean * sqrt_dt * gbar;
      for (int j = 0; j < n; ++j) dev[j] = a_dev * dev[j] + b_dev * sqrt_dt * (g[j] - gbar);
      record(step);
    }
  });

  auto variance_with_se = [](const Eigen::VectorXd& x) {
    const double m = x.mean();
    const Eigen::ArrayXd sq = (x.array() - m).square();
    const double nn = double(x.size());
    const double var = sq.sum() / (nn - 1.0);
    const double m4 = sq.square().mean();
    const double m2 = sq.mean();
    return std::pair{var, std::sqrt(std::max(m4 - m2 * m2, 0.0) / nn)};
  };
  for (std::size_t i = 0; i < k; ++i) {
    FluctuationSample s;
    s.closed_form = report.points[i];
    std::tie(s.var_mean_mc, s.se_mean) = variance_with_se(zbar.col(i));
    std::tie(s.var_agent_mc, s.se_agent) = variance_with_se(z1.col(i));
    out.samples.push_back(s);
  }
  return out;
}

std::vector<RiskRow> risk_comparison_report(const std::vector<ModelParams>& grid) {
  std::vector<RiskRow> rows;
  for (const auto& p : grid) {
    require_valid(p);
    RiskRow r;
    r.params = p;
    r.spread = p.spread();
    r.individual_variance = p.sigma * p.sigma / (2.0 * (p.theta + 2.0 * p.h));
    r.xi_b = equilibrium_mean(p);
    r.systemic_rate = 2.0 * r.xi_b * r.xi_b / (p.sigma * p.sigma * p.horizon);
    r.log_probability = -p.n_agents * r.systemic_rate;
    r.probability = std::exp(r.log_probability);
    rows.push_back(r);
  }
  // Spreads equal up to rounding must sort together.
  auto key = [](double s) { return std::round(s * 1e12); };
  std::stable_sort(rows.begin(), rows.end(), [&](const RiskRow& a, const RiskRow& b) {
    if (key(a.spread) != key(b.spread)) return key(a.spread) < key(b.spread);
    return a.params.sigma < b.params.sigma;
  });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto &prev = rows[i - 1], &cur = rows[i];
    const bool same_spread = std::abs(cur.spread - prev.spread) <= 1e-12 * std::abs(cur.spread);
    rows[i].systemic_risk_rises = same_spread && cur.params.sigma > prev.params.sigma &&
                                  -cur.log_probability < -prev.log_probability;
  }
  return rows;
}

}  // namespace mfrisk
