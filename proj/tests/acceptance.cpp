// Acceptance run: one PASS/FAIL line per criterion with the numbers behind it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mfrisk/diversity.hpp"
#include "mfrisk/equilibrium.hpp"
#include "mfrisk/fluctuation.hpp"
#include "mfrisk/fokker_planck.hpp"
#include "mfrisk/largedev.hpp"
#include "mfrisk/simulate.hpp"
#include "oracles.hpp"

using namespace mfrisk;

namespace {

// Tolerances and budgets.
constexpr double kOrderFactor = 3.0;        // spread allowed for a scaled residual
constexpr double kSigmaCTolerance = 0.05;
constexpr double kSlopeTolerance = 0.5;     // relative
constexpr double kPathTolerance = 1e-5;
constexpr double kStandardErrors = 3.0;
constexpr double kSingleGroupTolerance = 1e-10;
constexpr double kFiniteNBand = 0.05;       // relative
constexpr double kStationarityL1 = 1e-4;
constexpr double kChainTolerance = 1e-8;

int failures = 0;
const int kThreads = int(std::max(1u, std::thread::hardware_concurrency()));

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void report(const char* id, bool pass, double seconds, double budget, const std::string& detail) {
  const bool in_time = seconds < budget;
  const bool ok = pass && in_time;
  if (!ok) ++failures;
  std::printf("%s %s  %s  [%.1f s of %.0f s%s]\n", id, ok ? "PASS" : "FAIL", detail.c_str(),
              seconds, budget, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.4g", v[i]);
  return s + "}";
}

// A scaled residual r(eps) / eps^k is bounded when, as eps shrinks, it never exceeds
// kOrderFactor times its value at the largest eps. `scaled` is ordered by increasing eps.
bool bounded_as_eps_shrinks(const std::vector<double>& scaled) {
  const double coarse = scaled.back();
  return std::all_of(scaled.begin(), scaled.end(),
                     [&](double s) { return s <= kOrderFactor * coarse; });
}

double spread_ratio(const std::vector<double>& v) {
  return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
}

ModelParams params(double theta, double sigma, double h) {
  ModelParams p;
  p.theta = theta;
  p.sigma = sigma;
  p.h = h;
  return p;
}

void ac1() {
  Stopwatch w;
  std::vector<double> scaled;
  for (double h : {0.02, 0.04, 0.08}) {
    const auto p = params(10.0, 1.0, h);
    const double exact = solve_bistable(p).xi_b;
    scaled.push_back(std::abs(exact - small_h_equilibrium(p).at(h)) / (h * h));
  }
  const double spread = spread_ratio(scaled);
  report("AC-1", spread <= kOrderFactor, w.seconds(), 10,
         "residual/h^2 at h={0.02,0.04,0.08}: " + list(scaled) + fmt(", max/min %.3f", spread));
}

void ac2() {
  Stopwatch w;
  const double theta = 10.0, h = 0.01;
  double lo = 2.0, hi = 3.2;
  auto bistable = [&](double s) { return solve_bistable(params(theta, s, h)).bistable; };
  const bool bracket = bistable(lo) && !bistable(hi);
  for (int i = 0; i < 60 && bracket; ++i) {
    const double mid = 0.5 * (lo + hi);
    (bistable(mid) ? lo : hi) = mid;
  }
  const double flip = 0.5 * (lo + hi);
  const double target = std::sqrt(2.0 * theta / 3.0);
  report("AC-2", bracket && std::abs(flip - target) <= kSigmaCTolerance, w.seconds(), 30,
         fmt("flip at sigma=%.6f", flip) + fmt(", sqrt(2 theta/3)=%.6f", target) +
             fmt(", gap %.2e", std::abs(flip - target)));
}

void ac3() {
  Stopwatch w;
  auto p = params(10.0, 1.0, 0.1);
  p.horizon = 100.0;
  p.dt = 0.02;
  const std::vector<int> ns{10, 20, 40};
  std::vector<double> neg_log;
  std::string detail;
  EnsembleOptions opts;
  opts.threads = kThreads;
  for (int n : ns) {
    p.n_agents = n;
    const auto r = run_ensemble(p, 5000, 20240601, InitialCondition::minus_xi_b(), opts);
    neg_log.push_back(-std::log(r.p_hat));
    detail += fmt("N=%g: ", n) + fmt("p_hat=%.4f ", r.p_hat) +
              "(" + std::to_string(r.transitions_by_T) + " transitions), ";
  }
  bool increasing = std::isfinite(neg_log.back());
  for (std::size_t i = 1; i < ns.size(); ++i) increasing = increasing && neg_log[i] > neg_log[i - 1];
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    mx += ns[i];
    my += neg_log[i];
  }
  mx /= double(ns.size());
  my /= double(ns.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    sxy += (ns[i] - mx) * (neg_log[i] - my);
    sxx += (ns[i] - mx) * (ns[i] - mx);
  }
  const double slope = sxy / sxx;
  const double theory = rate_small_h(p, p.horizon);
  const double rel = std::abs(slope - theory) / theory;
  std::string reduced = "n/a";
  try {
    reduced = fmt("%.5f", minimize_reduced(p, p.horizon, 2000).value);
  } catch (const std::exception&) {
  }
  report("AC-3", increasing && rel <= kSlopeTolerance, w.seconds(), 600,
         detail + "-log p_hat " + list(neg_log) + fmt(", slope %.5f", slope) +
             fmt(" vs rate %.5f", theory) + fmt(" (rel. gap %.2f)", rel) + ", minimized reduced functional " + reduced);
}

void ac4() {
  Stopwatch w;
  std::vector<double> scaled;
  double worst_path = 0.0;
  for (double h : {0.02, 0.04, 0.08}) {
    const auto p = params(2.0, 1.0, h);
    const auto est = minimize_reduced(p, 10.0, 2000);
    scaled.push_back(std::abs(est.value - rate_small_h(p, 10.0)) / (h * h));
    const auto bvp = optimal_path_bvp(p, 10.0, 2000);
    worst_path = std::max(worst_path, (bvp.values - est.path->values).cwiseAbs().maxCoeff());
  }
  const double spread = spread_ratio(scaled);
  report("AC-4", spread <= kOrderFactor && worst_path < kPathTolerance, w.seconds(), 60,
         "|min - small-h rate|/h^2: " + list(scaled) + fmt(", max/min %.3f", spread) +
             fmt(", path sup gap %.2e", worst_path));
}

void ac5() {
  Stopwatch w;
  ModelParams base = params(2.0, 1.0, 0.0);
  base.n_agents = 100;
  base.horizon = 5.0;
  base.dt = 0.002;
  const GroupSpec g{{1.0, 3.0}, {0.5, 0.5}};
  const auto hp = make_het_params(base, g);
  const int replicas = 10000;
  std::vector<double> finals(replicas);
  SimulationOptions opts;
  opts.record_group_means = false;
  parallel_for(replicas, kThreads, [&](int r) {
    const auto traj =
        simulate_partial_averages(hp, 7, InitialCondition::minus_one(), opts, std::uint64_t(r));
    finals[std::size_t(r)] = traj.means[traj.size() - 1];
  });
  const double exact = sigma_T_squared(g, 1.0, 100, 5.0);
  const double sample = oracle::sample_variance(finals);
  const double se = oracle::variance_standard_error(finals);
  const double single = sigma_T_squared(GroupSpec{{2.0}, {1.0}}, 1.0, 100, 5.0);
  const double single_gap = std::abs(single - 5.0 / 100.0);
  const bool pass = std::abs(sample - exact) <= kStandardErrors * se && single_gap <= kSingleGroupTolerance;
  report("AC-5", pass, w.seconds(), 60,
         fmt("sigma_T^2 %.6f", exact) + fmt(", sample %.6f", sample) + fmt(" (SE %.2e", se) +
             fmt(", %.2f SE)", std::abs(sample - exact) / se) + fmt(", K=1 gap %.1e", single_gap));
}

void ac6() {
  Stopwatch w;
  auto p = params(2.0, 1.0, 0.1);
  p.n_agents = 100;
  p.dt = 0.01;
  const auto v = validate_fluctuations(p, 10000, 31, {10.0}, kThreads);
  const auto& s = v.samples.front();
  const auto& cf = s.closed_form;
  const double mean_gap = std::abs(s.var_mean_mc - cf.var_mean);
  const double agent_gap = std::abs(s.var_agent_mc - cf.var_agent_limit);
  const double agent_allow = kStandardErrors * s.se_agent + kFiniteNBand * cf.var_agent_limit;
  const bool mean_ok = mean_gap <= kStandardErrors * s.se_mean;
  const bool agent_ok = agent_gap <= agent_allow;
  report("AC-6", mean_ok && agent_ok, w.seconds(), 60,
         fmt("Var zbar: sample %.5f", s.var_mean_mc) + fmt(" vs %.5f", cf.var_mean) +
             fmt(" (%.1f SE", mean_gap / s.se_mean) + (mean_ok ? ", ok" : ", out") +
             fmt("; exact OU value %.5f)", cf.var_mean_exact) +
             fmt("; Var z_1: sample %.5f", s.var_agent_mc) + fmt(" vs %.5f", cf.var_agent_limit) +
             fmt(" (gap %.5f", agent_gap) + fmt(" allowed %.5f", agent_allow) +
             (agent_ok ? ", ok" : ", out") + fmt("; finite-N value %.5f)", cf.var_agent_exact));
}

void ac7() {
  Stopwatch w;
  auto pert = [](double delta) {
    DiversityPerturbation d;
    d.theta_bar = 2.0;
    d.fractions = {0.5, 0.5};
    d.alphas = {1.0, -1.0};
    d.delta = delta;
    return d;
  };
  const int n = 100;
  std::vector<double> logs;
  for (double delta : {0.0, 0.05, 0.1, 0.15, 0.2})
    logs.push_back(transition_probability_diverse(pert(delta).to_groups(), 1.0, n, 10.0).log_probability);
  bool increasing = true;
  for (std::size_t i = 1; i < logs.size(); ++i) increasing = increasing && logs[i] > logs[i - 1];
  std::vector<double> scaled, rederived;
  const std::vector<double> deltas{0.05, 0.1, 0.15, 0.2};
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double d = deltas[i];
    const double approx = diversity_expansion(pert(d), 1.0, n, 10.0, ExpansionVariant::Published).log_p_T;
    const double alt = diversity_expansion(pert(d), 1.0, n, 10.0, ExpansionVariant::Rederived).log_p_T;
    scaled.push_back(std::abs(logs[i + 1] - approx) / (d * d * d));
    rederived.push_back(std::abs(logs[i + 1] - alt) / (d * d * d));
  }
  const bool order_ok = bounded_as_eps_shrinks(scaled);
  report("AC-7", increasing && order_ok, w.seconds(), 10,
         "log p_T at delta={0,...,0.2}: " + list(logs) + (increasing ? " (increasing)" : " (NOT increasing)") +
             "; |expansion - exact|/delta^3 at delta={0.05,...,0.2}: " + list(scaled) +
             fmt(", growth as delta shrinks %.2f", scaled.front() / scaled.back()) +
             "; rederived coefficients give " + list(rederived));
}

void ac8() {
  Stopwatch w;
  // Stationarity of the equilibrium density.
  const auto pe = params(10.0, 1.0, 0.1);
  const double xi = solve_bistable(pe).xi_b;
  const auto eq = equilibrium_grid(xi, pe.theta, pe.h, pe.sigma);
  const double drift = l1_distance(eq, evolve_fp(eq, pe, 1.0));

  // Transient moments against particles.
  auto p = params(2.0, 1.0, 0.5);
  p.n_agents = 2000;
  p.dt = 0.005;
  const double m0 = -0.3, v0 = 0.1, t_end = 5.0;
  const auto fp = evolve_fp(DensityGrid::gaussian(m0, v0), p, t_end);
  const double fp_mean = fp.moment(1);
  const double fp_var = fp.moment(2) - fp_mean * fp_mean;

  const int replicas = 20;
  std::vector<double> means(replicas), vars(replicas);
  const Eigen::Index steps = step_count(t_end, p.dt);
  for (int r = 0; r < replicas; ++r) {
    const auto x0 = oracle::normal_samples(std::size_t(p.n_agents), m0, std::sqrt(v0), 1000u + r);
    SystemState state;
    state.positions = Eigen::Map<const Eigen::VectorXd>(x0.data(), p.n_agents);
    std::mt19937_64 eng(5000u + r);
    std::normal_distribution<double> n01;
    std::vector<double> z(std::size_t(p.n_agents));
    for (Eigen::Index k = 0; k < steps; ++k) {
      for (auto& g : z) g = n01(eng);
      step_homogeneous(state, p, z);
    }
    means[r] = state.positions.mean();
    vars[r] = (state.positions.array() - means[r]).square().sum() / double(p.n_agents - 1);
  }
  auto mean_se = [&](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    return std::pair{m, std::sqrt(oracle::sample_variance(v) / double(v.size()))};
  };
  const auto [pm, pm_se] = mean_se(means);
  const auto [pv, pv_se] = mean_se(vars);
  const bool mean_ok = std::abs(pm - fp_mean) <= kStandardErrors * pm_se;
  const bool var_ok = std::abs(pv - fp_var) <= kStandardErrors * pv_se;
  report("AC-8", drift < kStationarityL1 && mean_ok && var_ok, w.seconds(), 120,
         fmt("stationary L1 drift %.2e", drift) + fmt("; t=5 mean FP %.5f", fp_mean) +
             fmt(" particles %.5f", pm) + fmt(" (%.1f SE)", std::abs(pm - fp_mean) / pm_se) +
             fmt(", variance FP %.5f", fp_var) + fmt(" particles %.5f", pv) +
             fmt(" (%.1f SE)", std::abs(pv - fp_var) / pv_se));
}

void ac9() {
  Stopwatch w;
  const auto p = params(2.0, 1.0, 0.0);
  const double T = 10.0, xi0 = std::sqrt(1.0 - 3.0 * p.spread());
  const auto lin = MeanPath::linear(xi0, T, 2000);
  const std::vector<double> values{rate_h0(xi0, p.sigma, T), reduced_rate_functional(lin, p),
                                   gaussian_path_rate(lin, p), minimize_reduced(p, T, 2000).value};
  const double gap = *std::max_element(values.begin(), values.end()) -
                     *std::min_element(values.begin(), values.end());
  report("AC-9", gap <= kChainTolerance, w.seconds(), 10,
         "h0, reduced, gaussian-path, minimized: " + list(values) + fmt(", spread %.2e", gap));
}

void ac10() {
  Stopwatch w;
  std::mt19937_64 eng(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0, checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + trial % 4;
    GroupSpec g;
    double total = 0.0;
    for (int l = 0; l < k; ++l) {
      g.fractions.push_back(0.05 + u(eng));
      total += g.fractions.back();
    }
    for (auto& f : g.fractions) f /= total;
    for (int l = 0; l < k; ++l) g.thetas.push_back(0.2 + 10.0 * u(eng));
    const double theta = g.mean_theta();
    const double sc_div = critical_sigma_div(g, 0.0);
    const double sc_homo = std::sqrt(2.0 * theta / 3.0);
    if (sc_div > sc_homo * (1.0 + 1e-14)) ++violations;
    const double sigma = sc_div * (0.01 + 0.98 * u(eng));
    const double xi_div = small_h_equilibrium_div(g, sigma);
    const double xi_homo = std::sqrt(1.0 - 3.0 * sigma * sigma / (2.0 * theta));
    if (!(xi_div <= xi_homo * (1.0 + 1e-14) && xi_homo < 1.0)) ++violations;
    ++checked;
  }
  report("AC-10", violations == 0, w.seconds(), 5,
         std::to_string(checked) + " random group specs, " + std::to_string(violations) + " violations");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{ac1, ac2, ac3, ac4, ac5,
                                                    ac6, ac7, ac8, ac9, ac10};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      ++failures;
      std::printf("AC-%zu FAIL  exception: %s\n", i + 1, e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
