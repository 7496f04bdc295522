#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mfrisk/io.hpp"
#include "mfrisk/model.hpp"
#include "mfrisk/simulate.hpp"

namespace mfrisk {

/// One simulated panel: a homogeneous or heterogeneous parameter set.
struct FigurePoint {
  std::string label;  ///< "low", "mid", "high" or "below", "at", "above"
  double value = 0.0; ///< value of the swept quantity
  std::variant<ModelParams, HetModelParams> params;
};

struct FigureRegime {
  std::string name;
  std::string parameter;  ///< swept quantity
  std::string note;
  std::vector<FigurePoint> points;
};

const std::vector<std::string>& figure_regime_names();
/// Throws ParameterError for an unknown name.
FigureRegime figure_regime(const std::string& name);

struct FigureRun {
  Trajectory trajectory;
  bool bistable = false;
  double xi_b = 0.0;     ///< detector level (0 when not bistable)
  int transitions = 0;   ///< hysteresis crossings in either direction
};

/// Simulates one point from -1 with stream (seed, replica).
FigureRun run_figure_point(const FigurePoint& point, std::uint64_t seed, std::uint64_t replica = 0);

json to_json(const FigurePoint& point);

}  // namespace mfrisk
