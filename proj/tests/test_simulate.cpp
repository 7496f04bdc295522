#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"
#include "mfrisk/rng.hpp"
#include "mfrisk/simulate.hpp"
#include "oracles.hpp"

using namespace mfrisk;

namespace {

ModelParams params(double h, double theta, double sigma, int n, double horizon, double dt = 0.02) {
  ModelParams p;
  p.h = h;
  p.theta = theta;
  p.sigma = sigma;
  p.n_agents = n;
  p.horizon = horizon;
  p.dt = dt;
  return p;
}

// Mean and standard error of `x` from `batches` contiguous batch means.
std::pair<double, double> batch_mean(const Eigen::VectorXd& x, int batches) {
  const Eigen::Index len = x.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) means.push_back(x.segment(b * len, len).mean());
  double m = 0;
  for (double v : means) m += v;
  m /= batches;
  return {m, std::sqrt(oracle::sample_variance(means) / batches)};
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("single Euler steps") {
  SystemState s{Eigen::VectorXd::Constant(5, -1.0), 0.0};
  std::vector<double> g(5, 0.0);
  step_homogeneous(s, params(0.1, 10.0, 0.0, 5, 1.0), g);
  for (double x : s.positions) CHECK(x == -1.0);

  SystemState one{Eigen::VectorXd::Constant(1, 0.5), 0.0};
  std::vector<double> g1(1, 0.0);
  step_homogeneous(one, params(1.0, 0.0, 0.0, 1, 1.0), g1);
  CHECK(one.positions[0] == doctest::Approx(0.5075).epsilon(1e-15));
}

TEST_CASE("interaction conserves the mean at h = 0 without noise") {
  SystemState s{Eigen::VectorXd::LinSpaced(8, -2.0, 1.5), 0.0};
  const double before = s.empirical_mean();
  std::vector<double> g(8, 0.0);
  for (int i = 0; i < 100; ++i) step_homogeneous(s, params(0.0, 3.0, 0.0, 8, 10.0), g);
  CHECK(s.empirical_mean() == doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("group apportionment") {
  const GroupSpec thirds{{1.0, 2.0, 3.0}, {1.0 / 3, 1.0 / 3, 1.0 - 2.0 / 3}};
  CHECK(group_sizes(thirds, 99) == std::vector<int>{33, 33, 33});
  CHECK(group_sizes(GroupSpec{{1.0, 2.0}, {0.5, 0.5}}, 3) == std::vector<int>{2, 1});
  CHECK_THROWS_AS(group_sizes(GroupSpec{{1.0, 2.0}, {0.9, 0.1}}, 3), ParameterError);
  const auto thetas = agent_thetas(GroupSpec{{1.0, 2.0}, {0.5, 0.5}}, 3);
  CHECK(thetas[0] == 1.0);
  CHECK(thetas[1] == 1.0);
  CHECK(thetas[2] == 2.0);
}

TEST_CASE("heterogeneous step with equal rates is bit-identical to the homogeneous step") {
  const auto p = params(0.3, 4.0, 1.0, 6, 1.0);
  SystemState a{Eigen::VectorXd::LinSpaced(6, -1.2, 0.9), 0.0}, b = a;
  NormalStream noise(5, 0, StreamTag::Agents);
  std::vector<double> g(6);
  const Eigen::VectorXd rates = Eigen::VectorXd::Constant(6, 4.0);
  for (std::uint32_t n = 0; n < 50; ++n) {
    noise.fill(n, g);
    step_homogeneous(a, p, g);
    step_heterogeneous(b, p, rates, g);
  }
  for (Eigen::Index j = 0; j < 6; ++j) CHECK(a.positions[j] == b.positions[j]);
}

TEST_CASE("heterogeneous trajectory with equal rates reproduces the homogeneous one") {
  const auto p = params(0.1, 4.0, 1.0, 20, 5.0);
  // GroupSpec rejects tied rates, so the heterogeneous update is driven directly.
  const auto hom = simulate_replica(p, 9);
  SystemState s{Eigen::VectorXd::Constant(20, -1.0), 0.0};
  NormalStream noise(9, 0, StreamTag::Agents);
  std::vector<double> g(20);
  const Eigen::VectorXd rates = Eigen::VectorXd::Constant(20, 4.0);
  for (Eigen::Index n = 0; n + 1 < hom.size(); ++n) {
    noise.fill(std::uint32_t(n), g);
    step_heterogeneous(s, p, rates, g);
    CHECK(s.empirical_mean() == hom.means[n + 1]);
  }
}

TEST_CASE("noise-free trajectory from -1 is constant") {
  SimulationOptions opts;
  opts.noise = false;
  const auto t = simulate_replica(params(0.1, 10.0, 1.0, 30, 10.0), 1, InitialCondition::minus_one(), opts);
  for (Eigen::Index n = 0; n < t.size(); ++n) CHECK(t.means[n] == -1.0);
  CHECK(t.times[1] - t.times[0] == doctest::Approx(0.02));
  CHECK(t.size() == 501);
}

TEST_CASE("replicas are deterministic and distinct") {
  const auto p = params(0.1, 10.0, 1.0, 20, 10.0);
  const auto a = simulate_replica(p, 17), b = simulate_replica(p, 17);
  CHECK(a.means == b.means);
  const auto c = simulate_replica(p, 18), d = simulate_replica(p, 17, InitialCondition::minus_one(), {}, 1);
  CHECK(a.means != c.means);
  CHECK(a.means != d.means);
}

TEST_CASE("negating the start and the noise negates the path") {
  const auto p = params(0.2, 5.0, 1.0, 15, 10.0);
  Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(15, -1.3, 0.4);
  const auto a = simulate_replica(p, 3, InitialCondition::from(x0));
  SimulationOptions anti;
  anti.antithetic = true;
  const auto b = simulate_replica(p, 3, InitialCondition::from(-x0), anti);
  for (Eigen::Index n = 0; n < a.size(); ++n) CHECK(a.means[n] == -b.means[n]);
}

TEST_CASE("non-finite states are reported with the step") {
  const auto p = params(1000.0, 1.0, 1.0, 4, 1.0);
  try {
    simulate_replica(p, 1, InitialCondition::from(Eigen::VectorXd::Constant(4, 3.0)));
    FAIL("expected blow-up");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("time average near -xi_b without transitions") {
  const auto p = params(0.1, 10.0, 1.0, 100, 100.0);
  const double xi = equilibrium_mean(p);
  const auto t = simulate_replica(p, 2024, InitialCondition::minus_xi_b());
  REQUIRE(detect_transitions(t.means, xi).empty());
  const auto [m, se] = batch_mean(t.means, 10);
  CHECK(std::abs(m + xi) < 3.0 * se);
}

TEST_CASE("transition detector") {
  Eigen::VectorXd ramp = Eigen::VectorXd::LinSpaced(101, -0.9, 0.9);
  const auto one = detect_transitions(ramp, 0.9);
  REQUIRE(one.size() == 1);
  CHECK(one[0].direction == Direction::Up);
  CHECK(one[0].start_index < one[0].end_index);

  Eigen::VectorXd stay = Eigen::VectorXd::Constant(50, -0.8);
  stay[10] = -0.5;
  CHECK(detect_transitions(stay, 0.9).empty());

  // five alternations -0.9 -> +0.9 -> ... with chatter inside the band
  Eigen::VectorXd telegraph(60);
  for (int i = 0; i < 60; ++i) telegraph[i] = ((i / 10) % 2 == 0 ? -0.9 : 0.9) + (i % 3 == 0 ? 0.2 : -0.2) * 0.1;
  const auto five = detect_transitions(telegraph, 0.9);
  CHECK(five.size() == 5);
  CHECK(five[1].direction == Direction::Down);
}

TEST_CASE("Wilson interval") {
  const auto [lo, hi] = wilson_interval(0, 100);
  CHECK(lo == 0.0);
  CHECK(hi > 0.0);
  CHECK(hi < 0.05);
  const auto [a, b] = wilson_interval(30, 100);
  CHECK(a < 0.3);
  CHECK(b > 0.3);
}

TEST_CASE("ensembles") {
  const auto p = params(0.1, 10.0, 1.0, 10, 20.0);
  EnsembleOptions one, many;
  many.threads = 8;
  const auto a = run_ensemble(p, 200, 5, InitialCondition::minus_xi_b(), one);
  const auto b = run_ensemble(p, 200, 5, InitialCondition::minus_xi_b(), many);
  CHECK(a.p_hat == b.p_hat);
  for (int r = 0; r < 200; ++r) CHECK(a.replicas[r].time_average == b.replicas[r].time_average);
  CHECK(a.ci_low <= a.p_hat);
  CHECK(a.p_hat <= a.ci_high);

  EnsembleOptions quiet;
  quiet.simulation.noise = false;
  const auto z = run_ensemble(p, 20, 5, InitialCondition::minus_xi_b(), quiet);
  CHECK(z.p_hat == 0.0);
  CHECK(z.ci_low == 0.0);
}

TEST_CASE("heterogeneous ensembles do not depend on threads") {
  const auto hp = make_het_params(params(0.1, 10.0, 1.0, 10, 10.0, 0.01), GroupSpec{{5.0, 15.0}, {0.5, 0.5}});
  EnsembleOptions many;
  many.threads = 4;
  const auto a = run_ensemble(hp, 64, 2, InitialCondition::minus_one());
  const auto b = run_ensemble(hp, 64, 2, InitialCondition::minus_one(), many);
  CHECK(a.transitions_by_T == b.transitions_by_T);
  const auto t = simulate_replica(hp, 2);
  REQUIRE(t.group_means);
  CHECK(t.group_means->cols() == 2);
  CHECK(((t.group_means->col(0) + t.group_means->col(1)) / 2.0 - t.means).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("reduced dynamics equilibria") {
  const auto p = params(0.1, 10.0, 1.0, 100, 20.0);
  SimulationOptions quiet;
  quiet.noise = false;
  const double xi0 = small_h_equilibrium(p).xi0;
  const auto at_xi = simulate_reduced(p, 1, InitialCondition::from(Eigen::VectorXd::Constant(1, xi0)), quiet);
  for (Eigen::Index n = 0; n < at_xi.size(); ++n) CHECK(at_xi.means[n] == doctest::Approx(xi0).epsilon(1e-14));
  const auto at_zero = simulate_reduced(p, 1, InitialCondition::from(Eigen::VectorXd::Zero(1)), quiet);
  for (Eigen::Index n = 0; n < at_zero.size(); ++n) CHECK(at_zero.means[n] == 0.0);
  CHECK(simulate_reduced(p, 1).means[0] == doctest::Approx(-xi0));
}

TEST_CASE("reduced dynamics stationary variance matches the linearization") {
  const auto p = params(0.1, 10.0, 1.0, 1000, 20000.0);
  const double xi0 = small_h_equilibrium(p).xi0;
  const double kappa = p.h * 2.0 * xi0 * xi0;
  const double expected = p.sigma * p.sigma / p.n_agents / (2.0 * kappa);
  const auto t = simulate_reduced(p, 77);
  const int batches = 40;
  const Eigen::Index len = t.size() / batches;
  std::vector<double> vars;
  for (int b = 0; b < batches; ++b) {
    const Eigen::VectorXd seg = t.means.segment(b * len, len);
    vars.push_back((seg.array() - seg.mean()).square().mean());
  }
  double mean_var = 0;
  for (double v : vars) mean_var += v;
  mean_var /= batches;
  const double se = std::sqrt(oracle::sample_variance(vars) / batches);
  CHECK(std::abs(mean_var - expected) < 3.0 * se + 0.01 * expected);
}

TEST_CASE("partial averages") {
  const auto hp = make_het_params(params(0.0, 2.0, 0.5, 100, 5.0), GroupSpec{{1.0, 3.0}, {0.5, 0.5}});
  SimulationOptions quiet;
  quiet.noise = false;
  const auto t = simulate_partial_averages(hp, 1, InitialCondition::minus_xi_b(), quiet);
  const double xi = small_h_equilibrium_div(hp.groups, 0.5);
  for (Eigen::Index n = 0; n < t.size(); ++n) CHECK(t.means[n] == doctest::Approx(-xi).epsilon(1e-14));

  // K = 1: the mean is a Brownian motion with variance sigma^2 T / N.
  const auto single = make_het_params(params(0.0, 2.0, 1.0, 100, 5.0), GroupSpec{{2.0}, {1.0}});
  std::vector<double> finals;
  for (int r = 0; r < 4000; ++r) {
    const auto tr = simulate_partial_averages(single, 8, InitialCondition::minus_xi_b(), {}, std::uint64_t(r));
    finals.push_back(tr.means[tr.size() - 1]);
  }
  const double var = oracle::sample_variance(finals);
  CHECK(std::abs(var - 0.05) < 3.0 * oracle::variance_standard_error(finals));
}

}
