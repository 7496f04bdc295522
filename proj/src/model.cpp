#include "mfrisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfrisk/errors.hpp"

namespace mfrisk {

double GroupSpec::mean_theta() const {
  double acc = 0.0;
  for (std::size_t l = 0; l < thetas.size(); ++l) acc += fractions[l] * thetas[l];
  return acc;
}

namespace {

void check_finite(std::vector<ValidationIssue>& out, const char* field, double v) {
  if (!std::isfinite(v)) out.push_back({field, v, std::string(field) + " must be finite"});
}

void check_stability(std::vector<ValidationIssue>& out, double dt, double theta_max) {
  const double rate = std::max(theta_max, 1.0);
  if (dt * rate > kStabilityLimit) {
    std::ostringstream msg;
    msg << "dt too large for explicit scheme: dt*max(theta,1) = " << dt * rate << " > "
        << kStabilityLimit;
    out.push_back({"dt", dt, msg.str()});
  }
}

std::string join(const std::vector<ValidationIssue>& issues) {
  std::ostringstream os;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) os << "; ";
    os << issues[i].message << " (" << issues[i].field << " = " << issues[i].value << ")";
  }
  return os.str();
}

}  // namespace

std::vector<ValidationIssue> validate(const ModelParams& p) {
  std::vector<ValidationIssue> out;
  check_finite(out, "h", p.h);
  check_finite(out, "theta", p.theta);
  check_finite(out, "sigma", p.sigma);
  check_finite(out, "horizon", p.horizon);
  check_finite(out, "dt", p.dt);
  if (p.h < 0) out.push_back({"h", p.h, "h must be non-negative"});
  if (p.theta < 0) out.push_back({"theta", p.theta, "theta must be non-negative"});
  if (!(p.sigma > 0)) out.push_back({"sigma", p.sigma, "sigma must be positive"});
  if (p.n_agents < 1) out.push_back({"n_agents", double(p.n_agents), "n_agents must be at least 1"});
  if (!(p.horizon > 0)) out.push_back({"horizon", p.horizon, "horizon must be positive"});
  if (!(p.dt > 0)) {
    out.push_back({"dt", p.dt, "dt must be positive"});
  } else {
    if (p.dt >= p.horizon) out.push_back({"dt", p.dt, "dt exceeds horizon"});
    check_stability(out, p.dt, p.theta);
  }
  return out;
}

std::vector<ValidationIssue> validate(const GroupSpec& g, bool require_distinct) {
  std::vector<ValidationIssue> out;
  if (g.thetas.empty()) out.push_back({"groups", 0.0, "at least one group is required"});
  if (g.thetas.size() != g.fractions.size()) {
    out.push_back({"groups", double(g.fractions.size()),
                   "thetas and fractions must have the same length"});
    return out;
  }
  double total = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    const double th = g.thetas[l], rho = g.fractions[l];
    if (!(std::isfinite(th) && th > 0))
      out.push_back({"groups.theta", th, "group theta must be positive and finite"});
    if (!(std::isfinite(rho) && rho > 0))
      out.push_back({"groups.fraction", rho, "group fraction must be positive and finite"});
    total += rho;
    for (std::size_t k = 0; k < l; ++k)
      if (require_distinct && g.thetas[k] == th)
        out.push_back({"groups.theta", th, "group thetas must be pairwise distinct"});
  }
  if (!g.thetas.empty() && std::abs(total - 1.0) > 1e-12)
    out.push_back({"groups.fraction", total, "group fractions must sum to 1"});
  return out;
}

std::vector<ValidationIssue> validate(const HetModelParams& p) {
  auto out = validate(p.base);
  auto g = validate(p.groups);
  out.insert(out.end(), g.begin(), g.end());
  if (g.empty() && p.base.dt > 0) {
    const double theta_max = *std::max_element(p.groups.thetas.begin(), p.groups.thetas.end());
    if (theta_max > p.base.theta) check_stability(out, p.base.dt, theta_max);
  }
  return out;
}

void require_valid(const ModelParams& p) {
  if (auto issues = validate(p); !issues.empty()) throw ParameterError(join(issues));
}
void require_valid(const GroupSpec& g, bool require_distinct) {
  if (auto issues = validate(g, require_distinct); !issues.empty()) throw ParameterError(join(issues));
}
void require_valid(const HetModelParams& p) {
  if (auto issues = validate(p); !issues.empty()) throw ParameterError(join(issues));
}

HetModelParams make_het_params(const ModelParams& base, const GroupSpec& groups) {
  HetModelParams out{base, groups};
  if (groups.thetas.size() == groups.fractions.size() && !groups.thetas.empty())
    out.base.theta = groups.mean_theta();
  return out;
}

}  // namespace mfrisk
