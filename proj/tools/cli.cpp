#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mfrisk/diversity.hpp"
#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"
#include "mfrisk/figures.hpp"
#include "mfrisk/fluctuation.hpp"
#include "mfrisk/fokker_planck.hpp"
#include "mfrisk/io.hpp"
#include "mfrisk/largedev.hpp"
#include "mfrisk/simulate.hpp"

namespace mfrisk::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out_dir = ".";
  int threads = 1;
  std::string format = "json";
};

// Model flags shared by most subcommands; explicit flags override the config file.
struct ModelFlags {
  std::string config;
  std::optional<double> h, theta, sigma, horizon, dt;
  std::optional<int> n_agents;
  std::string groups;

  void attach(CLI::App* app, bool with_groups) {
    app->add_option("--config", config, "JSON parameter file");
    app->add_option("--h", h, "potential depth");
    app->add_option("--theta", theta, "mean-reversion rate");
    app->add_option("--sigma", sigma, "noise strength");
    app->add_option("--N", n_agents, "number of agents");
    app->add_option("--T", horizon, "time horizon");
    app->add_option("--dt", dt, "time step");
    if (with_groups)
      app->add_option("--groups", groups,
                      "groups as a JSON array of {theta, fraction}, or a file holding one");
  }

  ExperimentConfig load() const {
    ExperimentConfig c;
    if (!config.empty()) c = experiment_config_from_json(read_json_file(config));
    if (h) c.params.h = *h;
    if (theta) c.params.theta = *theta;
    if (sigma) c.params.sigma = *sigma;
    if (n_agents) c.params.n_agents = *n_agents;
    if (horizon) c.params.horizon = *horizon;
    if (dt) c.params.dt = *dt;
    if (!groups.empty()) {
      const auto first = groups.find_first_not_of(" \t\n");
      const bool literal = first != std::string::npos && groups[first] == '[';
      json j;
      if (literal) {
        try {
          j = json::parse(groups);
        } catch (const json::parse_error& e) {
          throw ParameterError(std::string("invalid --groups JSON: ") + e.what());
        }
      } else {
        j = read_json_file(groups);
      }
      c.groups = group_spec_from_json(j);
    }
    return c;
  }
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto b = token.find_first_not_of(' '), e = token.find_last_not_of(' ');
    if (b == std::string::npos) throw ParameterError(std::string("empty entry in ") + what);
    double v = 0.0;
    const char* first = token.data() + b;
    const char* last = token.data() + e + 1;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
      throw ParameterError(std::string("cannot parse '") + token + "' in " + what);
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError(std::string(what) + " is empty");
  return out;
}

std::uint64_t resolve_seed(const Globals& g, const ExperimentConfig& c) {
  if (g.seed_given) return g.seed;
  return c.seed.value_or(g.seed);
}

fs::path output_path(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

// name.csv -> name_3.csv for sweep point 3
std::string indexed(const std::string& name, std::optional<std::size_t> index) {
  if (!index) return name;
  const fs::path p(name);
  return (p.parent_path() / (p.stem().string() + "_" + std::to_string(*index) +
                             p.extension().string()))
      .string();
}

std::string csv_cell(const json& v) {
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  return "";
}

void emit(const json& record, const Globals& g, std::ostream& out) {
  if (g.format == "json") {
    out << record.dump(2) << '\n';
    return;
  }
  // One CSV row per record; nested values are left to the JSON form.
  const json rows = record.contains("results") ? record.at("results") : json::array({record});
  std::vector<std::string> keys;
  for (const auto& [k, v] : rows.at(0).items())
    if (v.is_primitive() && !v.is_null()) keys.push_back(k);
  for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "," : "") << keys[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < keys.size(); ++i)
      out << (i ? "," : "") << (row.contains(keys[i]) ? csv_cell(row.at(keys[i])) : "");
    out << '\n';
  }
}

json params_json(const ModelParams& p, const std::optional<GroupSpec>& groups) {
  json j = to_json(p);
  if (groups) j["groups"] = to_json(*groups);
  return j;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// Runs fn once, or once per sweep value with the swept parameter replaced.
template <typename Fn>
json over_sweep(const ExperimentConfig& c, Fn&& fn) {
  if (!c.sweep) return fn(c.params, std::optional<std::size_t>{});
  json results = json::array();
  for (std::size_t i = 0; i < c.sweep->values.size(); ++i)
    results.push_back(fn(with_parameter(c.params, c.sweep->parameter, c.sweep->values[i]),
                         std::optional<std::size_t>{i}));
  return json{{"sweep", {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}}},
              {"results", results}};
}

// ---------------------------------------------------------------- simulate

enum class SimKind { Homogeneous, Heterogeneous, Reduced };

struct SimulateFlags {
  ModelFlags model;
  int replicas = 1;
  std::string initial;
  std::string out;
};

CsvTable trajectory_table(const Trajectory& traj) {
  CsvTable t;
  t.header = {"t", "xbar"};
  const Eigen::Index k = traj.group_means ? traj.group_means->cols() : 0;
  for (Eigen::Index l = 0; l < k; ++l) t.header.push_back("xbar_g" + std::to_string(l + 1));
  t.rows.reserve(std::size_t(traj.size()));
  for (Eigen::Index n = 0; n < traj.size(); ++n) {
    std::vector<double> row{traj.times[n], traj.means[n]};
    for (Eigen::Index l = 0; l < k; ++l) row.push_back((*traj.group_means)(n, l));
    t.rows.push_back(std::move(row));
  }
  return t;
}

json run_simulate(SimKind kind, const SimulateFlags& f, const Globals& g) {
  const ExperimentConfig c = f.model.load();
  const std::uint64_t seed = resolve_seed(g, c);
  if (kind == SimKind::Heterogeneous && !c.groups)
    throw ParameterError("simulate-het needs groups (--groups or \"groups\" in the config)");
  if (kind != SimKind::Heterogeneous && c.groups)
    throw ParameterError("groups were given; use simulate-het");
  if (f.replicas < 1) throw ParameterError("--replicas must be at least 1");

  std::string initial = f.initial;
  if (initial.empty()) initial = kind == SimKind::Reduced ? "minus-xib" : "minus-one";
  const InitialCondition init =
      initial == "minus-one" ? InitialCondition::minus_one() : InitialCondition::minus_xi_b();
  const char* kind_name = kind == SimKind::Homogeneous     ? "homogeneous"
                          : kind == SimKind::Heterogeneous ? "heterogeneous"
                                                           : "reduced";

  auto one = [&](const ModelParams& p, std::optional<std::size_t> index) -> json {
    const HetModelParams hp = c.groups ? make_het_params(p, *c.groups) : HetModelParams{p, {}};
    const ModelParams& effective = kind == SimKind::Heterogeneous ? hp.base : p;
    json record{{"system", kind_name}, {"seed", seed}, {"initial", initial},
                {"params", params_json(effective, c.groups)}, {"rng", rng_metadata(seed)}};

    if (f.replicas == 1) {
      Trajectory traj;
      std::optional<double> level;
      switch (kind) {
        case SimKind::Homogeneous:
          traj = simulate_replica(p, seed, init);
          try { level = equilibrium_mean(p); } catch (const ParameterError&) {}
          break;
        case SimKind::Heterogeneous:
          traj = simulate_replica(hp, seed, init);
          try { level = equilibrium_mean(hp); } catch (const ParameterError&) {}
          break;
        case SimKind::Reduced:
          traj = simulate_reduced(p, seed, init);
          try { level = small_h_equilibrium(p).xi0; } catch (const ParameterError&) {}
          break;
      }
      const std::string name = indexed(f.out.empty() ? "trajectory.csv" : f.out, index);
      const fs::path path = output_path(g, name);
      json meta = record;
      meta["columns"] = trajectory_table(traj).header;
      write_file_atomic(path, trajectory_table(traj).str());
      write_file_atomic(path.string() + ".meta.json", meta.dump(2) + "\n");
      record["replicas"] = 1;
      record["file"] = path.string();
      if (level) {
        record["xi_b"] = *level;
        record["transitions"] = detect_transitions(traj.means, *level).size();
      } else {
        record["xi_b"] = nullptr;
        record["transitions"] = nullptr;
      }
      return record;
    }

    EnsembleOptions opts;
    opts.threads = g.threads;
    EnsembleResult r;
    switch (kind) {
      case SimKind::Homogeneous: r = run_ensemble(p, f.replicas, seed, init, opts); break;
      case SimKind::Heterogeneous: r = run_ensemble(hp, f.replicas, seed, init, opts); break;
      case SimKind::Reduced: r = run_ensemble_reduced(p, f.replicas, seed, init, opts); break;
    }
    record["replicas"] = r.n_replicas;
    record["transitions"] = r.transitions_by_T;
    record["p_hat"] = r.p_hat;
    record["ci_low"] = r.ci_low;
    record["ci_high"] = r.ci_high;
    record["xi_b"] = r.xi_b;
    return record;
  };

  json result = over_sweep(c, one);
  if (f.replicas > 1) {
    const fs::path path = output_path(g, f.out.empty() ? "ensemble.json" : f.out);
    result["file"] = path.string();
    write_file_atomic(path, result.dump(2) + "\n");
  }
  return result;
}

// ------------------------------------------------------------- equilibrium

json run_equilibrium(const ModelFlags& f) {
  const ExperimentConfig c = f.load();
  auto one = [&](const ModelParams& p, std::optional<std::size_t>) -> json {
    EquilibriumSolution sol;
    if (c.groups) {
      const HetModelParams hp = make_het_params(p, *c.groups);
      if (p.h == 0.0) {
        require_valid(hp);
        sol.method = EquilibriumMethod::SmallHExpansion;
        sol.sigma_c = critical_sigma_div(hp.groups, 0.0);
        if (p.sigma < sol.sigma_c) {
          sol.xi_b = small_h_equilibrium_div(hp.groups, p.sigma);
          sol.xi_small_h = SmallHExpansion{sol.xi_b, std::nan("")};
          sol.bistable = true;
          sol.residual = std::abs(sol.xi_b - consistency_map(sol.xi_b, hp.groups, 0.0, p.sigma));
        }
      } else {
        sol = solve_bistable_div(hp);
      }
    } else if (p.h == 0.0) {
      require_valid(p);
      sol = expansion_solution(p);
    } else {
      sol = solve_bistable(p);
    }
    json j{{"xi_b", sol.xi_b},
           {"xi0", sol.xi_small_h ? number_or_null(sol.xi_small_h->xi0) : json(nullptr)},
           {"xi1", sol.xi_small_h ? number_or_null(sol.xi_small_h->xi1) : json(nullptr)},
           {"sigma_c", sol.sigma_c},
           {"bistable", sol.bistable},
           {"method", to_string(sol.method)},
           {"residual", sol.residual}};
    j["params"] = params_json(c.groups ? make_het_params(p, *c.groups).base : p, c.groups);
    return j;
  };
  return over_sweep(c, one);
}

// -------------------------------------------------------------------- rate

struct RateFlags {
  ModelFlags model;
  std::string method = "minimize";
  int grid = 2000;
  std::optional<double> xi0;
  std::string out;
  std::string path_csv;
};

json run_rate(const RateFlags& f, const Globals& g) {
  const ExperimentConfig c = f.model.load();
  if (c.groups) throw ParameterError("rate applies to the homogeneous model; drop the groups");
  const RateMethod method = rate_method_from_string(f.method);
  if (f.grid < 2) throw ParameterError("--grid must be at least 2");

  auto one = [&](const ModelParams& p, std::optional<std::size_t> index) -> json {
    const double horizon = p.horizon;
    if (!(horizon > 0)) throw ParameterError("T must be positive");
    if (!(p.sigma > 0)) throw ParameterError("sigma must be positive");
    RateEstimate est;
    est.method = method;
    switch (method) {
      case RateMethod::H0ClosedForm:
        est.value = rate_h0(f.xi0 ? *f.xi0 : small_h_equilibrium(p).xi0, p.sigma, horizon);
        break;
      case RateMethod::SmallHClosedForm:
        est.value = rate_small_h(p, horizon);
        break;
      case RateMethod::ReducedMinimization:
        est = minimize_reduced(p, horizon, f.grid, f.xi0);
        break;
      case RateMethod::GaussianPath: {
        const auto m = minimize_reduced(p, horizon, f.grid, f.xi0);
        est.path = m.path;
        est.value = gaussian_path_rate(*m.path, p);
        est.method = RateMethod::GaussianPath;
        break;
      }
      case RateMethod::Bvp:
        est.path = optimal_path_bvp(p, horizon, f.grid, f.xi0);
        est.value = reduced_rate_functional(*est.path, p);
        break;
    }
    const auto prob = transition_probability_ld(est, p.n_agents);
    json j{{"rate", est.value}, {"method", to_string(est.method)}, {"N", p.n_agents},
           {"T", horizon},      {"log_p", prob.log_probability}, {"p", prob.probability},
           {"params", to_json(p)}};
    if (method == RateMethod::ReducedMinimization) {
      j["iterations"] = est.iterations;
      j["el_residual"] = est.el_residual;
    }
    if (!f.path_csv.empty()) {
      if (!est.path) throw ParameterError("--path-csv needs a path-based method");
      CsvTable t;
      t.header = {"t", "a"};
      for (Eigen::Index n = 0; n < est.path->values.size(); ++n)
        t.rows.push_back({est.path->times[n], est.path->values[n]});
      const fs::path path = output_path(g, indexed(f.path_csv, index));
      write_file_atomic(path, t.str());
      j["path_file"] = path.string();
    }
    return j;
  };
  json result = over_sweep(c, one);
  if (!f.out.empty()) write_file_atomic(output_path(g, f.out), result.dump(2) + "\n");
  return result;
}

// --------------------------------------------------------------- diversity

struct DiversityFlags {
  ModelFlags model;
  std::string delta_scan;
  std::string out;
  std::string csv_out = "diversity_scan.csv";
};

json expansion_json(const DiversityExpansion& e) {
  return {{"xi_b2", e.xi_b2}, {"sigma_T2", e.sigma_T2}, {"log_p_T", e.log_p_T}};
}

json run_diversity(const DiversityFlags& f, const Globals& g) {
  const ExperimentConfig c = f.model.load();
  if (!c.groups) throw ParameterError("diversity needs --groups");
  const GroupSpec& groups = *c.groups;
  require_valid(groups);
  const ModelParams& p = c.params;

  // Write the groups as theta_bar (1 + delta alpha_k) with delta = 1.
  DiversityPerturbation pert;
  pert.theta_bar = groups.mean_theta();
  pert.fractions = groups.fractions;
  for (double th : groups.thetas) pert.alphas.push_back(th / pert.theta_bar - 1.0);
  double drift = 0.0;
  for (std::size_t k = 0; k < pert.alphas.size(); ++k) drift += pert.fractions[k] * pert.alphas[k];
  for (double& a : pert.alphas) a -= drift;  // remove rounding in sum rho alpha
  pert.delta = 1.0;

  const auto exact = transition_probability_diverse(groups, p.sigma, p.n_agents, p.horizon);
  json j{{"groups", to_json(groups)},
         {"sigma", p.sigma},
         {"N", p.n_agents},
         {"T", p.horizon},
         {"theta_bar", pert.theta_bar},
         {"spread", pert.spread()},
         {"exact",
          {{"xi_b2", exact.xi_b * exact.xi_b},
           {"sigma_T2", exact.sigma_T2},
           {"log_p_T", exact.log_probability},
           {"p_T", exact.probability}}},
         {"expansion", expansion_json(diversity_expansion(pert, p.sigma, p.n_agents, p.horizon))},
         {"expansion_rederived",
          expansion_json(diversity_expansion(pert, p.sigma, p.n_agents, p.horizon,
                                             ExpansionVariant::Rederived))}};

  if (!f.delta_scan.empty()) {
    CsvTable t;
    t.header = {"delta", "xi_b2_exact", "xi_b2_exp", "sigmaT2_exact", "sigmaT2_exp", "log_pT_exp"};
    for (double delta : parse_list(f.delta_scan, "--delta-scan")) {
      DiversityPerturbation q = pert;
      q.delta = delta;
      const GroupSpec gd = q.to_groups();
      const double xi = small_h_equilibrium_div(gd, p.sigma);
      const double st2 = sigma_T_squared(gd, p.sigma, p.n_agents, p.horizon);
      const auto e = diversity_expansion(q, p.sigma, p.n_agents, p.horizon);
      t.rows.push_back({delta, xi * xi, e.xi_b2, st2, e.sigma_T2, e.log_p_T});
    }
    const fs::path path = output_path(g, f.csv_out);
    write_file_atomic(path, t.str());
    j["scan_file"] = path.string();
  }
  if (!f.out.empty()) write_file_atomic(output_path(g, f.out), j.dump(2) + "\n");
  return j;
}

// ------------------------------------------------------------- fluctuation

struct FluctuationFlags {
  ModelFlags model;
  std::string t_grid;
  bool validate = false;
  int replicas = 10000;
  std::string out = "fluctuation.csv";
  std::string risk_grid;
  std::string risk_out = "risk_comparison.csv";
};

json run_fluctuation(const FluctuationFlags& f, const Globals& g) {
  const ExperimentConfig c = f.model.load();
  const ModelParams& p = c.params;
  require_valid(p);
  std::vector<double> times;
  if (f.t_grid.empty()) {
    for (int i = 0; i <= 10; ++i) times.push_back(p.horizon * i / 10.0);
  } else {
    times = parse_list(f.t_grid, "--t-grid");
  }
  const auto report = fluctuation_report(p, times);
  json j{{"params", to_json(p)},
         {"stationary_var_mean", report.stationary_var_mean},
         {"stationary_var_agent", report.stationary_var_agent},
         {"mean_regime_ok", report.mean_regime_ok},
         {"agent_regime_ok", report.agent_regime_ok}};

  CsvTable t;
  t.header = {"t", "var_mean_cf", "var_agent_cf"};
  json points = json::array();
  for (const auto& pt : report.points) {
    points.push_back({{"t", pt.t},
                      {"var_mean", pt.var_mean},
                      {"var_agent_limit", pt.var_agent_limit},
                      {"var_mean_exact", pt.var_mean_exact},
                      {"var_agent_exact", pt.var_agent_exact}});
    t.rows.push_back({pt.t, pt.var_mean, pt.var_agent_limit});
  }
  if (f.validate) {
    const std::uint64_t seed = resolve_seed(g, c);
    const auto v = validate_fluctuations(p, f.replicas, seed, times, g.threads);
    t.header.insert(t.header.end(), {"var_mean_mc", "var_agent_mc", "se_mean", "se_agent"});
    for (std::size_t i = 0; i < v.samples.size(); ++i) {
      const auto& s = v.samples[i];
      t.rows[i].insert(t.rows[i].end(), {s.var_mean_mc, s.var_agent_mc, s.se_mean, s.se_agent});
      points[i]["var_mean_mc"] = s.var_mean_mc;
      points[i]["var_agent_mc"] = s.var_agent_mc;
      points[i]["se_mean"] = s.se_mean;
      points[i]["se_agent"] = s.se_agent;
    }
    j["replicas"] = v.replicas;
    j["seed"] = seed;
    j["rng"] = rng_metadata(seed);
    j["warnings"] = v.warnings;
  }
  j["points"] = points;
  const fs::path path = output_path(g, f.out);
  write_file_atomic(path, t.str());
  j["file"] = path.string();

  if (!f.risk_grid.empty()) {
    const auto first = f.risk_grid.find_first_not_of(" \t\n");
    const json grid_json = first != std::string::npos && f.risk_grid[first] == '['
                               ? json::parse(f.risk_grid)
                               : read_json_file(f.risk_grid);
    if (!grid_json.is_array()) throw ParameterError("--risk-grid must be a JSON array");
    std::vector<ModelParams> grid;
    for (const auto& item : grid_json) grid.push_back(model_params_from_json(item, p));
    CsvTable r;
    r.header = {"h",      "theta",  "sigma",         "T",     "N", "spread", "individual_variance",
                "xi_b",   "rate",   "log_p",         "p",     "systemic_risk_rises"};
    for (const auto& row : risk_comparison_report(grid))
      r.rows.push_back({row.params.h, row.params.theta, row.params.sigma, row.params.horizon,
                        double(row.params.n_agents), row.spread, row.individual_variance, row.xi_b,
                        row.systemic_rate, row.log_probability, row.probability,
                        row.systemic_risk_rises ? 1.0 : 0.0});
    const fs::path rpath = output_path(g, f.risk_out);
    write_file_atomic(rpath, r.str());
    j["risk_file"] = rpath.string();
  }
  return j;
}

// ----------------------------------------------------------- fokker-planck

struct FokkerPlanckFlags {
  ModelFlags model;
  double t_end = 5.0;
  std::optional<double> snapshot_every;
  std::string initial = "gaussian";
  double init_mean = -1.0;
  std::optional<double> init_var;
  int cells = 800;
  double y_min = -4.0, y_max = 4.0;
  std::string out = "density.csv";
};

json run_fokker_planck(const FokkerPlanckFlags& f, const Globals& g) {
  const ExperimentConfig c = f.model.load();
  const ModelParams& p = c.params;
  if (!(f.t_end > 0)) throw ParameterError("--t-end must be positive");
  if (f.cells < 10) throw ParameterError("--cells must be at least 10");
  const GroupSpec groups = c.groups ? *c.groups : GroupSpec{{p.theta}, {1.0}};
  require_valid(groups, false);
  if (!(p.sigma > 0)) throw ParameterError("sigma must be positive");

  std::vector<DensityGrid> initials;
  double xi = 0.0;
  if (f.initial == "equilibrium") {
    xi = c.groups ? equilibrium_mean(make_het_params(p, groups)) : equilibrium_mean(p);
  }
  for (double th : groups.thetas) {
    if (f.initial == "equilibrium") {
      initials.push_back(equilibrium_grid(-xi, th, p.h, p.sigma, f.y_min, f.y_max, f.cells));
    } else {
      const double var = f.init_var ? *f.init_var : p.sigma * p.sigma / (2.0 * th);
      if (!(var > 0)) throw ParameterError("--init-var must be positive");
      initials.push_back(DensityGrid::gaussian(f.init_mean, var, f.y_min, f.y_max, f.cells));
    }
  }

  const std::size_t k = groups.size();
  CsvTable t;
  t.header = {"t", "y"};
  if (k == 1) {
    t.header.push_back("u");
  } else {
    for (std::size_t l = 0; l < k; ++l) t.header.push_back("u_" + std::to_string(l + 1));
  }
  auto snapshot = [&](const std::vector<DensityGrid>& d) {
    const Eigen::ArrayXd y = d[0].centers();
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      std::vector<double> row{d[0].time, y[i]};
      for (const auto& grid : d) row.push_back(grid.values[i]);
      t.rows.push_back(std::move(row));
    }
  };

  FpDiagnostics diag;
  FpOptions opts;
  opts.diagnostics = &diag;
  opts.snapshot_every = f.snapshot_every ? *f.snapshot_every : f.t_end;
  opts.on_snapshot = snapshot;
  const auto final = evolve_fp_system(initials, groups, p.sigma, p.h, f.t_end, opts);

  double mean = 0.0;
  json group_json = json::array();
  for (std::size_t l = 0; l < k; ++l) {
    mean += groups.fractions[l] * final[l].moment(1);
    group_json.push_back({{"theta", groups.thetas[l]},
                          {"mass", final[l].mass()},
                          {"mean", final[l].moment(1)},
                          {"second_moment", final[l].moment(2)}});
  }
  const fs::path path = output_path(g, f.out);
  write_file_atomic(path, t.str());
  return {{"t_end", f.t_end},
          {"mean", mean},
          {"groups", group_json},
          {"params", params_json(p, c.groups)},
          {"diagnostics",
           {{"substeps", diag.substeps},
            {"min_dt", diag.min_dt},
            {"max_clipped_mass", diag.max_clipped_mass},
            {"min_value", diag.min_value},
            {"max_mass_error", diag.max_mass_error}}},
          {"file", path.string()}};
}

// ----------------------------------------------------------------- figures

json run_figures(const std::vector<std::string>& regimes_in, const Globals& g) {
  const std::vector<std::string> regimes = regimes_in.empty() ? figure_regime_names() : regimes_in;
  std::vector<FigureRegime> specs;
  for (const auto& name : regimes) specs.push_back(figure_regime(name));

  struct Job {
    std::size_t regime, point;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < specs.size(); ++r)
    for (std::size_t i = 0; i < specs[r].points.size(); ++i) jobs.push_back({r, i});
  std::vector<FigureRun> runs(jobs.size());
  parallel_for(int(jobs.size()), g.threads, [&](int j) {
    const auto& job = jobs[std::size_t(j)];
    runs[std::size_t(j)] =
        run_figure_point(specs[job.regime].points[job.point], g.seed, std::uint64_t(job.point));
  });

  json manifest{{"seed", g.seed}, {"rng", rng_metadata(g.seed)}, {"initial", "minus-one"},
                {"detector_band", 0.5}, {"regimes", json::array()}};
  std::size_t j = 0;
  for (const auto& spec : specs) {
    json entry{{"name", spec.name}, {"parameter", spec.parameter}, {"note", spec.note},
               {"points", json::array()}};
    for (const auto& point : spec.points) {
      const auto& run = runs[j++];
      const std::string file = "figures/" + spec.name + "_" + point.label + ".csv";
      write_file_atomic(output_path(g, file), trajectory_table(run.trajectory).str());
      json pj = to_json(point);
      pj["file"] = file;
      pj["bistable"] = run.bistable;
      pj["xi_b"] = run.bistable ? json(run.xi_b) : json(nullptr);
      pj["transitions"] = run.transitions;
      entry["points"].push_back(pj);
    }
    manifest["regimes"].push_back(entry);
  }
  const fs::path path = output_path(g, "figures/manifest.json");
  write_file_atomic(path, manifest.dump(2) + "\n");
  manifest["file"] = path.string();
  return manifest;
}

int default_threads() {
  if (const char* env = std::getenv("MFRISK_THREADS")) {
    int v = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void report_error(std::ostream& err, const char* type, const std::string& message, int code) {
  err << json{{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}}.dump()
      << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field systemic risk: simulation, equilibria, rates and diversity"};
  app.name("mfrisk");
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_help_flag("--help", "print this help and exit");  // -h would clash with --h

  Globals g;
  g.threads = default_threads();
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for output files")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "stdout format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  SimulateFlags sim, sim_het, sim_red;
  auto add_sim = [&](const char* name, const char* help, SimulateFlags& f, bool groups) {
    auto* sub = app.add_subcommand(name, help);
    f.model.attach(sub, groups);
    sub->add_option("--replicas", f.replicas, "number of replicas (1 writes a trajectory CSV)");
    sub->add_option("--initial", f.initial, "initial condition")
        ->check(CLI::IsMember({"minus-one", "minus-xib"}));
    sub->add_option("--out", f.out, "output file name");
    return sub;
  };
  auto* sim_cmd = add_sim("simulate", "simulate the interacting system", sim, false);
  auto* het_cmd = add_sim("simulate-het", "simulate the heterogeneous system", sim_het, true);
  auto* red_cmd = add_sim("simulate-reduced", "simulate the reduced mean dynamics", sim_red, false);

  ModelFlags eq;
  auto* eq_cmd = app.add_subcommand("equilibrium", "solve for the collective equilibria");
  eq.attach(eq_cmd, true);

  RateFlags rate;
  auto* rate_cmd = app.add_subcommand("rate", "transition rate and probability");
  rate.model.attach(rate_cmd, false);
  rate_cmd->add_option("--method", rate.method, "rate method")
      ->check(CLI::IsMember({"h0", "small-h", "minimize", "gaussian-path", "bvp"}))
      ->capture_default_str();
  rate_cmd->add_option("--grid", rate.grid, "path grid intervals")->capture_default_str();
  rate_cmd->add_option("--xi0", rate.xi0, "endpoint override (+/- xi)");
  rate_cmd->add_option("--out", rate.out, "JSON output file");
  rate_cmd->add_option("--path-csv", rate.path_csv, "write the path as CSV t,a");

  DiversityFlags div;
  auto* div_cmd = app.add_subcommand("diversity", "diversity and transition probability");
  div.model.attach(div_cmd, true);
  div_cmd->add_option("--delta-scan", div.delta_scan, "comma-separated delta values");
  div_cmd->add_option("--out", div.out, "JSON output file");
  div_cmd->add_option("--csv-out", div.csv_out, "delta-scan CSV file")->capture_default_str();

  FluctuationFlags fl;
  auto* fl_cmd = app.add_subcommand("fluctuation", "linearized fluctuation variances");
  fl.model.attach(fl_cmd, false);
  fl_cmd->add_option("--t-grid", fl.t_grid, "comma-separated sample times");
  fl_cmd->add_flag("--validate", fl.validate, "compare with Monte Carlo");
  fl_cmd->add_option("--replicas", fl.replicas, "Monte Carlo replicas")->capture_default_str();
  fl_cmd->add_option("--out", fl.out, "CSV output file")->capture_default_str();
  fl_cmd->add_option("--risk-grid", fl.risk_grid,
                     "JSON array of parameter objects for the risk comparison table");
  fl_cmd->add_option("--risk-out", fl.risk_out, "risk table CSV file")->capture_default_str();

  FokkerPlanckFlags fp;
  auto* fp_cmd = app.add_subcommand("fokker-planck", "evolve the mean-field density");
  fp.model.attach(fp_cmd, true);
  fp_cmd->add_option("--t-end", fp.t_end, "end time")->capture_default_str();
  fp_cmd->add_option("--snapshot-every", fp.snapshot_every, "output interval");
  fp_cmd->add_option("--initial", fp.initial, "initial density")
      ->check(CLI::IsMember({"gaussian", "equilibrium"}))
      ->capture_default_str();
  fp_cmd->add_option("--init-mean", fp.init_mean, "mean of the Gaussian start")->capture_default_str();
  fp_cmd->add_option("--init-var", fp.init_var, "variance of the Gaussian start");
  fp_cmd->add_option("--cells", fp.cells, "finite-volume cells")->capture_default_str();
  fp_cmd->add_option("--y-min", fp.y_min)->capture_default_str();
  fp_cmd->add_option("--y-max", fp.y_max)->capture_default_str();
  fp_cmd->add_option("--out", fp.out, "CSV output file")->capture_default_str();

  std::vector<std::string> regimes;
  auto* fig_cmd = app.add_subcommand("figures", "reproduce the figure regimes");
  fig_cmd->add_option("regimes", regimes, "regime names (default: all)")
      ->check(CLI::IsMember(figure_regime_names()));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), kUsage);
    return kUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    json result;
    if (*sim_cmd) result = run_simulate(SimKind::Homogeneous, sim, g);
    else if (*het_cmd) result = run_simulate(SimKind::Heterogeneous, sim_het, g);
    else if (*red_cmd) result = run_simulate(SimKind::Reduced, sim_red, g);
    else if (*eq_cmd) result = run_equilibrium(eq);
    else if (*rate_cmd) result = run_rate(rate, g);
    else if (*div_cmd) result = run_diversity(div, g);
    else if (*fl_cmd) result = run_fluctuation(fl, g);
    else if (*fp_cmd) result = run_fokker_planck(fp, g);
    else if (*fig_cmd) result = run_figures(regimes, g);
    emit(result, g, out);
    return kOk;
  } catch (const ParameterError& e) {
    report_error(err, "parameters", e.what(), kInvalidParameters);
    return kInvalidParameters;
  } catch (const IoError& e) {
    report_error(err, "io", e.what(), kIoFailure);
    return kIoFailure;
  } catch (const NumericalError& e) {
    report_error(err, "numerical", e.what(), kNumericalFailure);
    return kNumericalFailure;
  } catch (const json::exception& e) {
    report_error(err, "parameters", e.what(), kInvalidParameters);
    return kInvalidParameters;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what(), kFailure);
    return kFailure;
  }
}

}  // namespace mfrisk::cli
