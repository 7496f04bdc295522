#include "mfrisk/figures.hpp"

#include <cmath>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"

namespace mfrisk {

namespace {

ModelParams base_params(double h, double theta, double sigma, int n) {
  ModelParams p;
  p.h = h;
  p.theta = theta;
  p.sigma = sigma;
  p.n_agents = n;
  p.horizon = 100.0;
  p.dt = 0.02;
  return p;
}

const GroupSpec kTwoGroups{{5.0, 15.0}, {0.5, 0.5}};

FigureRegime homogeneous(const std::string& name, const std::string& parameter,
                         const std::string& note, const ModelParams& base,
                         const std::vector<std::pair<std::string, double>>& values) {
  FigureRegime r{name, parameter, note, {}};
  for (const auto& [label, v] : values) r.points.push_back({label, v, with_parameter(base, parameter, v)});
  return r;
}

FigureRegime heterogeneous(const std::string& name, const std::string& parameter,
                           const std::string& note, const ModelParams& base,
                           const std::vector<std::pair<std::string, double>>& values) {
  FigureRegime r{name, parameter, note, {}};
  ModelParams fine = base;
  fine.dt = 0.01;  // the fast group needs the smaller step
  for (const auto& [label, v] : values)
    r.points.push_back({label, v, make_het_params(with_parameter(fine, parameter, v), kTwoGroups)});
  return r;
}

}  // namespace

const std::vector<std::string>& figure_regime_names() {
  static const std::vector<std::string> names{"sigma-sweep", "theta-sweep", "h-sweep",
                                              "N-sweep",     "het-sigma",   "het-h",
                                              "het-N",       "het-diversity"};
  return names;
}

FigureRegime figure_regime(const std::string& name) {
  if (name == "sigma-sweep")
    return homogeneous(name, "sigma", "theta=10, h=0.1; critical sigma = sqrt(2 theta / 3)",
                       base_params(0.1, 10.0, 1.0, 100),
                       {{"below", 2.0}, {"at", std::sqrt(20.0 / 3.0)}, {"above", 3.2}});
  if (name == "theta-sweep")
    return homogeneous(name, "theta", "sigma=1, h=0.1; critical theta = 3 sigma^2 / 2",
                       base_params(0.1, 1.0, 1.0, 100),
                       {{"below", 1.0}, {"at", 1.5}, {"above", 3.0}});
  if (name == "h-sweep")
    return homogeneous(name, "h", "theta=10, sigma=1, N=20", base_params(0.1, 10.0, 1.0, 20),
                       {{"low", 0.1}, {"mid", 0.3}, {"high", 1.0}});
  if (name == "N-sweep")
    return homogeneous(name, "n_agents", "theta=10, sigma=1, h=0.1",
                       base_params(0.1, 10.0, 1.0, 100),
                       {{"low", 10.0}, {"mid", 50.0}, {"high", 200.0}});
  if (name == "het-sigma")
    return heterogeneous(name, "sigma", "groups (5, 15) at (0.5, 0.5), h=0.1; critical sigma = 2",
                         base_params(0.1, 10.0, 1.0, 100),
                         {{"below", 1.5}, {"at", 2.0}, {"above", 2.6}});
  if (name == "het-h")
    return heterogeneous(name, "h", "groups (5, 15) at (0.5, 0.5), sigma=1, N=20",
                         base_params(0.1, 10.0, 1.0, 20),
                         {{"low", 0.1}, {"mid", 0.3}, {"high", 1.0}});
  if (name == "het-N")
    return heterogeneous(name, "n_agents", "groups (5, 15) at (0.5, 0.5), sigma=1, h=0.1",
                         base_params(0.1, 10.0, 1.0, 100),
                         {{"low", 10.0}, {"mid", 50.0}, {"high", 200.0}});
  if (name == "het-diversity") {
    FigureRegime r{name, "spread",
                   "groups (10 - d, 10 + d) at (0.5, 0.5), mean theta 10, sigma=1, h=0.1, N=20",
                   {}};
    ModelParams base = base_params(0.1, 10.0, 1.0, 20);
    base.dt = 0.01;
    for (const auto& [label, d] : std::vector<std::pair<std::string, double>>{
             {"low", 1.0}, {"mid", 5.0}, {"high", 8.0}})
      r.points.push_back({label, d, make_het_params(base, GroupSpec{{10.0 - d, 10.0 + d}, {0.5, 0.5}})});
    return r;
  }
  throw ParameterError("unknown figure regime '" + name + "'");
}

FigureRun run_figure_point(const FigurePoint& point, std::uint64_t seed, std::uint64_t replica) {
  FigureRun run;
  std::visit(
      [&](const auto& p) {
        run.trajectory = simulate_replica(p, seed, InitialCondition::minus_one(), {}, replica);
        try {
          run.xi_b = equilibrium_mean(p);
          run.bistable = true;
        } catch (const ParameterError&) {
          run.bistable = false;
        }
      },
      point.params);
  if (run.bistable)
    run.transitions = int(detect_transitions(run.trajectory.means, run.xi_b).size());
  return run;
}

json to_json(const FigurePoint& point) {
  json j{{"label", point.label}, {"value", point.value}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ModelParams>) {
          j["params"] = to_json(p);
        } else {
          j["params"] = to_json(p.base);
          j["params"]["groups"] = to_json(p.groups);
        }
      },
      point.params);
  return j;
}

}  // namespace mfrisk
