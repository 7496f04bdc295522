#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfrisk/model.hpp"

namespace mfrisk {

/// Empirical-mean series on the uniform grid t_n = n dt.
struct Trajectory {
  Eigen::VectorXd times;
  Eigen::VectorXd means;
  /// Per-group means, one column per group (heterogeneous and partial-average runs).
  std::optional<Eigen::MatrixXd> group_means;

  Eigen::Index size() const { return times.size(); }
};

enum class Direction { Up, Down };  ///< Up: -xi_b -> +xi_b

struct TransitionEvent {
  Eigen::Index start_index = 0;  ///< last index still resolved in the old state
  Eigen::Index end_index = 0;    ///< first index resolved in the new state
  Direction direction = Direction::Up;
};

struct InitialCondition {
  enum class Kind { MinusOne, MinusXiB, Custom };
  Kind kind = Kind::MinusOne;
  Eigen::VectorXd custom;  ///< per-agent positions (length N), or length 1 for scalar systems

  static InitialCondition minus_one() { return {Kind::MinusOne, {}}; }
  static InitialCondition minus_xi_b() { return {Kind::MinusXiB, {}}; }
  static InitialCondition from(Eigen::VectorXd x) { return {Kind::Custom, std::move(x)}; }
};

struct SimulationOptions {
  bool noise = true;             ///< false runs the deterministic skeleton
  bool antithetic = false;       ///< negates every Gaussian increment
  bool record_group_means = true;
};

/// One Euler step of the homogeneous system; `gaussians` holds N standard normals.
void step_homogeneous(SystemState& state, const ModelParams& p, std::span<const double> gaussians);

/// Contiguous largest-remainder apportionment of N agents to groups (ties go to the earlier group).
/// Throws ParameterError if any group would be empty.
std::vector<int> group_sizes(const GroupSpec& g, int n_agents);
/// Per-agent theta following group_sizes.
Eigen::VectorXd agent_thetas(const GroupSpec& g, int n_agents);

/// One Euler step with per-agent rates (the heterogeneous system).
void step_heterogeneous(SystemState& state, const ModelParams& p, const Eigen::VectorXd& thetas,
                        std::span<const double> gaussians);

/// Replica `replica` of the stream family `seed`.
Trajectory simulate_replica(const ModelParams& p, std::uint64_t seed,
                            const InitialCondition& init = InitialCondition::minus_one(),
                            const SimulationOptions& opts = {}, std::uint64_t replica = 0);
Trajectory simulate_replica(const HetModelParams& p, std::uint64_t seed,
                            const InitialCondition& init = InitialCondition::minus_one(),
                            const SimulationOptions& opts = {}, std::uint64_t replica = 0);

/// Euler scheme for dx = -h [x^3 - (1 - 3 sigma^2 / 2 theta) x] dt + sigma / sqrt(N) dw.
/// MinusXiB starts at -xi0, the reduced equilibrium.
Trajectory simulate_reduced(const ModelParams& p, std::uint64_t seed,
                            const InitialCondition& init = InitialCondition::minus_xi_b(),
                            const SimulationOptions& opts = {}, std::uint64_t replica = 0);

/// Euler scheme for the h = 0 partial-average system
///   dX_k = -theta_k (X_k - xbar) dt + sigma / sqrt(rho_k N) dW_k,   xbar = sum_k rho_k X_k.
/// p.base.h is not used. MinusXiB starts every group at -xi_b^div.
Trajectory simulate_partial_averages(const HetModelParams& p, std::uint64_t seed,
                                     const InitialCondition& init = InitialCondition::minus_xi_b(),
                                     const SimulationOptions& opts = {},
                                     std::uint64_t replica = 0);

/// Hysteresis detector: the state is "-" below -band*xi_b and "+" above +band*xi_b.
std::vector<TransitionEvent> detect_transitions(const Eigen::VectorXd& means, double xi_b,
                                                double band = 0.5);

struct ReplicaSummary {
  int transitions = 0;
  int up_transitions = 0;
  std::optional<Eigen::Index> first_up_index;
  double time_average = 0.0;
  double final_mean = 0.0;
};

struct EnsembleResult {
  int n_replicas = 0;
  int transitions_by_T = 0;  ///< replicas with at least one completed -xi_b -> +xi_b transition
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double xi_b = 0.0;         ///< equilibrium used by the detector
  std::vector<ReplicaSummary> replicas;
};

struct EnsembleOptions {
  int threads = 1;  ///< parallelism degree; never affects results
  double band = 0.5;
  SimulationOptions simulation;
};

/// Wilson score interval at 95%.
std::pair<double, double> wilson_interval(int successes, int trials, double z = 1.959963984540054);

EnsembleResult run_ensemble(const ModelParams& p, int replicas, std::uint64_t master_seed,
                            const InitialCondition& init, const EnsembleOptions& opts = {});
EnsembleResult run_ensemble(const HetModelParams& p, int replicas, std::uint64_t master_seed,
                            const InitialCondition& init, const EnsembleOptions& opts = {});
EnsembleResult run_ensemble_reduced(const ModelParams& p, int replicas, std::uint64_t master_seed,
                                    const InitialCondition& init, const EnsembleOptions& opts = {});

/// Number of Euler steps covering [0, horizon].
Eigen::Index step_count(double horizon, double dt);

/// Runs fn(i) for i in [0, count) over `threads` workers; fn must write only to slot i.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace mfrisk
