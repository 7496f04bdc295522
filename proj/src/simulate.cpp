#include "mfrisk/simulate.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"
#include "mfrisk/rng.hpp"

namespace mfrisk {

namespace {

// Shared by the homogeneous and heterogeneous steps so equal rates give
// bit-identical updates.
template <typename RateAt>
double euler_update(Eigen::VectorXd& x, double mean, double h, double noise_scale, double dt,
                    RateAt rate_at, std::span<const double> g) {
  const Eigen::Index n = x.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xj = x[j];
    x[j] = xj - h * force_U(xj) * dt + noise_scale * g[j] + rate_at(j) * (mean - xj) * dt;
  }
  return x.mean();
}

void check_finite(double mean, Eigen::Index step) {
  if (!std::isfinite(mean)) {
    std::ostringstream msg;
    msg << "non-finite state at step " << step << " (explicit scheme unstable?)";
    throw NumericalError(msg.str());
  }
}

Eigen::VectorXd initial_agents(const InitialCondition& init, int n, double xi_b_if_needed) {
  switch (init.kind) {
    case InitialCondition::Kind::MinusOne:
      return Eigen::VectorXd::Constant(n, -1.0);
    case InitialCondition::Kind::MinusXiB:
      return Eigen::VectorXd::Constant(n, -xi_b_if_needed);
    case InitialCondition::Kind::Custom:
      if (init.custom.size() != n) {
        std::ostringstream msg;
        msg << "custom initial condition has length " << init.custom.size() << ", expected " << n;
        throw ParameterError(msg.str());
      }
      return init.custom;
  }
  return {};
}

class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint64_t replica, StreamTag tag, std::size_t n,
              const SimulationOptions& opts)
      : stream_(seed, replica, tag), buffer_(n, 0.0), opts_(opts) {}

  std::span<const double> draw(std::uint32_t step) {
    if (!opts_.noise) return buffer_;
    stream_.fill(step, buffer_);
    if (opts_.antithetic)
      for (double& v : buffer_) v = -v;
    return buffer_;
  }

 private:
  NormalStream stream_;
  std::vector<double> buffer_;
  SimulationOptions opts_;
};

template <typename RateAt>
Trajectory run_agents(const ModelParams& p, Eigen::VectorXd x, RateAt rate_at, std::uint64_t seed,
                      std::uint64_t replica, const SimulationOptions& opts,
                      const std::vector<int>* sizes) {
  const Eigen::Index steps = step_count(p.horizon, p.dt);
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, double(steps) * p.dt);
  traj.means.resize(steps + 1);
  if (sizes && opts.record_group_means) traj.group_means = Eigen::MatrixXd(steps + 1, sizes->size());

  auto record_groups = [&](Eigen::Index row) {
    if (!traj.group_means) return;
    Eigen::Index start = 0;
    for (std::size_t l = 0; l < sizes->size(); ++l) {
      (*traj.group_means)(row, l) = x.segment(start, (*sizes)[l]).mean();
      start += (*sizes)[l];
    }
  };

  NoiseSource noise(seed, replica, StreamTag::Agents, x.size(), opts);
  const double noise_scale = p.sigma * std::sqrt(p.dt);
  double mean = x.mean();
  traj.means[0] = mean;
  record_groups(0);
  for (Eigen::Index n = 0; n < steps; ++n) {
    mean = euler_update(x, mean, p.h, noise_scale, p.dt, rate_at, noise.draw(std::uint32_t(n)));
    check_finite(mean, n + 1);
    traj.means[n + 1] = mean;
    record_groups(n + 1);
  }
  return traj;
}

template <typename Simulate>
EnsembleResult ensemble(int replicas, double xi_b, const EnsembleOptions& opts, Simulate&& sim) {
  if (replicas < 1) throw ParameterError("replicas must be at least 1");
  EnsembleResult out;
  out.n_replicas = replicas;
  out.xi_b = xi_b;
  out.replicas.resize(replicas);
  parallel_for(replicas, opts.threads, [&](int r) {
    Trajectory traj;
    try {
      traj = sim(std::uint64_t(r));
    } catch (const NumericalError& e) {
      throw NumericalError("replica " + std::to_string(r) + ": " + e.what());
    }
    ReplicaSummary s;
    for (const auto& ev : detect_transitions(traj.means, xi_b, opts.band)) {
      ++s.transitions;
      if (ev.direction == Direction::Up) {
        ++s.up_transitions;
        if (!s.first_up_index) s.first_up_index = ev.end_index;
      }
    }
    s.time_average = traj.means.mean();
    s.final_mean = traj.means[traj.means.size() - 1];
    out.replicas[r] = s;
  });
  for (const auto& s : out.replicas)
    if (s.up_transitions > 0) ++out.transitions_by_T;
  out.p_hat = double(out.transitions_by_T) / replicas;
  std::tie(out.ci_low, out.ci_high) = wilson_interval(out.transitions_by_T, replicas);
  return out;
}

}  // namespace

Eigen::Index step_count(double horizon, double dt) {
  return Eigen::Index(std::floor(horizon / dt + 1e-9));
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void step_homogeneous(SystemState& state, const ModelParams& p, std::span<const double> gaussians) {
  if (Eigen::Index(gaussians.size()) != state.positions.size())
    throw ParameterError("step_homogeneous needs one gaussian per agent");
  const double theta = p.theta;
  euler_update(state.positions, state.positions.mean(), p.h, p.sigma * std::sqrt(p.dt), p.dt,
               [theta](Eigen::Index) { return theta; }, gaussians);
  state.time += p.dt;
}

void step_heterogeneous(SystemState& state, const ModelParams& p, const Eigen::VectorXd& thetas,
                        std::span<const double> gaussians) {
  if (Eigen::Index(gaussians.size()) != state.positions.size() ||
      thetas.size() != state.positions.size())
    throw ParameterError("step_heterogeneous needs one gaussian and one rate per agent");
  euler_update(state.positions, state.positions.mean(), p.h, p.sigma * std::sqrt(p.dt), p.dt,
               [&thetas](Eigen::Index j) { return thetas[j]; }, gaussians);
  state.time += p.dt;
}

std::vector<int> group_sizes(const GroupSpec& g, int n_agents) {
  const std::size_t k = g.size();
  std::vector<int> sizes(k);
  std::vector<double> remainder(k);
  int assigned = 0;
  for (std::size_t l = 0; l < k; ++l) {
    const double quota = g.fractions[l] * n_agents;
    sizes[l] = int(std::floor(quota));
    remainder[l] = quota - sizes[l];
    assigned += sizes[l];
  }
  for (int left = n_agents - assigned; left > 0; --left) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < k; ++l)
      if (remainder[l] > remainder[best]) best = l;
    ++sizes[best];
    remainder[best] = -1.0;
  }
  for (std::size_t l = 0; l < k; ++l)
    if (sizes[l] == 0) {
      std::ostringstream msg;
      msg << "group " << l + 1 << " is empty at N = " << n_agents
          << " (fraction " << g.fractions[l] << ")";
      throw ParameterError(msg.str());
    }
  return sizes;
}

Eigen::VectorXd agent_thetas(const GroupSpec& g, int n_agents) {
  const auto sizes = group_sizes(g, n_agents);
  Eigen::VectorXd out(n_agents);
  Eigen::Index start = 0;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    out.segment(start, sizes[l]).setConstant(g.thetas[l]);
    start += sizes[l];
  }
  return out;
}

Trajectory simulate_replica(const ModelParams& p, std::uint64_t seed, const InitialCondition& init,
                            const SimulationOptions& opts, std::uint64_t replica) {
  require_valid(p);
  const double xi_b = init.kind == InitialCondition::Kind::MinusXiB ? equilibrium_mean(p) : 0.0;
  const double theta = p.theta;
  return run_agents(p, initial_agents(init, p.n_agents, xi_b),
                    [theta](Eigen::Index) { return theta; }, seed, replica, opts, nullptr);
}

Trajectory simulate_replica(const HetModelParams& p, std::uint64_t seed,
                            const InitialCondition& init, const SimulationOptions& opts,
                            std::uint64_t replica) {
  require_valid(p);
  const auto sizes = group_sizes(p.groups, p.base.n_agents);
  const Eigen::VectorXd thetas = agent_thetas(p.groups, p.base.n_agents);
  const double xi_b = init.kind == InitialCondition::Kind::MinusXiB ? equilibrium_mean(p) : 0.0;
  return run_agents(p.base, initial_agents(init, p.base.n_agents, xi_b),
                    [&thetas](Eigen::Index j) { return thetas[j]; }, seed, replica, opts, &sizes);
}

Trajectory simulate_reduced(const ModelParams& p, std::uint64_t seed, const InitialCondition& init,
                            const SimulationOptions& opts, std::uint64_t replica) {
  require_valid(p);
  const double xi0 = small_h_equilibrium(p).xi0;
  double x = -1.0;
  if (init.kind == InitialCondition::Kind::MinusXiB) x = -xi0;
  if (init.kind == InitialCondition::Kind::Custom) {
    if (init.custom.size() != 1) throw ParameterError("reduced system takes a scalar initial value");
    x = init.custom[0];
  }
  const Eigen::Index steps = step_count(p.horizon, p.dt);
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, double(steps) * p.dt);
  traj.means.resize(steps + 1);
  traj.means[0] = x;
  const double a = xi0 * xi0;  // 1 - 3 sigma^2 / (2 theta)
  const double noise_scale = p.sigma / std::sqrt(double(p.n_agents)) * std::sqrt(p.dt);
  NoiseSource noise(seed, replica, StreamTag::Reduced, 1, opts);
  for (Eigen::Index n = 0; n < steps; ++n) {
    const double g = noise.draw(std::uint32_t(n))[0];
    x = x - p.h * (x * x * x - a * x) * p.dt + noise_scale * g;
    check_finite(x, n + 1);
    traj.means[n + 1] = x;
  }
  return traj;
}

Trajectory simulate_partial_averages(const HetModelParams& p, std::uint64_t seed,
                                     const InitialCondition& init, const SimulationOptions& opts,
                                     std::uint64_t replica) {
  require_valid(p);
  const auto& g = p.groups;
  const Eigen::Index k = Eigen::Index(g.size());
  const Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(g.fractions.data(), k);
  const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(g.thetas.data(), k);
  Eigen::VectorXd x;
  switch (init.kind) {
    case InitialCondition::Kind::MinusOne: x = Eigen::VectorXd::Constant(k, -1.0); break;
    case InitialCondition::Kind::MinusXiB:
      x = Eigen::VectorXd::Constant(k, -small_h_equilibrium_div(g, p.base.sigma));
      break;
    case InitialCondition::Kind::Custom:
      if (init.custom.size() != k) throw ParameterError("partial averages need K initial values");
      x = init.custom;
      break;
  }
  const double dt = p.base.dt;
  const Eigen::VectorXd noise_scale =
      (p.base.sigma * std::sqrt(dt) / std::sqrt(double(p.base.n_agents))) * rho.cwiseSqrt().cwiseInverse();
  const Eigen::Index steps = step_count(p.base.horizon, dt);
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, double(steps) * dt);
  traj.means.resize(steps + 1);
  traj.group_means = Eigen::MatrixXd(steps + 1, k);
  traj.means[0] = rho.dot(x);
  traj.group_means->row(0) = x.transpose();
  NoiseSource noise(seed, replica, StreamTag::PartialAverages, std::size_t(k), opts);
  for (Eigen::Index n = 0; n < steps; ++n) {
    const auto z = noise.draw(std::uint32_t(n));
    const double xbar = rho.dot(x);
    for (Eigen::Index i = 0; i < k; ++i)
      x[i] += -theta[i] * (x[i] - xbar) * dt + noise_scale[i] * z[i];
    traj.means[n + 1] = rho.dot(x);
    check_finite(traj.means[n + 1], n + 1);
    traj.group_means->row(n + 1) = x.transpose();
  }
  return traj;
}

std::vector<TransitionEvent> detect_transitions(const Eigen::VectorXd& means, double xi_b,
                                                double band) {
  if (!(xi_b > 0)) throw ParameterError("transition detection needs xi_b > 0");
  if (!(band > 0 && band < 1)) throw ParameterError("transition band must lie in (0, 1)");
  const double level = band * xi_b;
  std::vector<TransitionEvent> events;
  int state = 0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    const int s = means[i] < -level ? -1 : (means[i] > level ? 1 : 0);
    if (s == 0) continue;
    if (state != 0 && s != state)
      events.push_back({last, i, s > 0 ? Direction::Up : Direction::Down});
    state = s;
    last = i;
  }
  return events;
}

std::pair<double, double> wilson_interval(int successes, int trials, double z) {
  const double n = trials, p = double(successes) / trials;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half),
          successes == trials ? 1.0 : std::min(1.0, centre + half)};
}

EnsembleResult run_ensemble(const ModelParams& p, int replicas, std::uint64_t master_seed,
                            const InitialCondition& init, const EnsembleOptions& opts) {
  require_valid(p);
  const double xi_b = equilibrium_mean(p);
  return ensemble(replicas, xi_b, opts, [&](std::uint64_t r) {
    return simulate_replica(p, master_seed, init, opts.simulation, r);
  });
}

EnsembleResult run_ensemble(const HetModelParams& p, int replicas, std::uint64_t master_seed,
                            const InitialCondition& init, const EnsembleOptions& opts) {
  require_valid(p);
  const double xi_b = equilibrium_mean(p);
  return ensemble(replicas, xi_b, opts, [&](std::uint64_t r) {
    return simulate_replica(p, master_seed, init, opts.simulation, r);
  });
}

EnsembleResult run_ensemble_reduced(const ModelParams& p, int replicas, std::uint64_t master_seed,
                                    const InitialCondition& init, const EnsembleOptions& opts) {
  require_valid(p);
  const double xi0 = small_h_equilibrium(p).xi0;
  return ensemble(replicas, xi0, opts, [&](std::uint64_t r) {
    return simulate_reduced(p, master_seed, init, opts.simulation, r);
  });
}

}  // namespace mfrisk
