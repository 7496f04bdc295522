#include "mfrisk/largedev.hpp"

#include <cmath>
#include <sstream>

#include "mfrisk/equilibrium.hpp"
#include "mfrisk/errors.hpp"

namespace mfrisk {

namespace {

struct Drift {
  double h, s;
  double f(double a) const { return reduced_drift(a, s); }
  double df(double a) const { return 3.0 * a * a + 3.0 * s - 1.0; }
  double d2f(double a) const { return 6.0 * a; }
};

void check_path(const MeanPath& path) {
  if (path.times.size() < 2 || path.times.size() != path.values.size())
    throw ParameterError("mean path needs at least two nodes and matching lengths");
}

// Symmetric tridiagonal solve; returns false when a pivot is not positive.
bool solve_spd_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& off,
                           const Eigen::VectorXd& rhs, Eigen::VectorXd& x) {
  const Eigen::Index n = diag.size();
  Eigen::VectorXd c(n), d(n);
  double pivot = diag[0];
  if (!(pivot > 0)) return false;
  c[0] = n > 1 ? off[0] / pivot : 0.0;
  d[0] = rhs[0] / pivot;
  for (Eigen::Index i = 1; i < n; ++i) {
    pivot = diag[i] - off[i - 1] * c[i - 1];
    if (!(pivot > 0)) return false;
    c[i] = i + 1 < n ? off[i] / pivot : 0.0;
    d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / pivot;
  }
  x.resize(n);
  x[n - 1] = d[n - 1];
  for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
  return true;
}

struct Linearization {
  double value = 0.0;
  Eigen::VectorXd gradient;  // interior nodes
  Eigen::VectorXd diag, off;           // exact Hessian
  Eigen::VectorXd gn_diag, gn_off;     // Gauss-Newton part
};

Linearization linearize(const Eigen::VectorXd& a, double dt, double sigma, const Drift& drift,
                        bool with_hessian) {
  const Eigen::Index nodes = a.size(), m = nodes - 2;
  const double c = dt / (4.0 * sigma * sigma);
  Linearization lin;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd hd = Eigen::VectorXd::Zero(nodes), ho = Eigen::VectorXd::Zero(nodes - 1);
  Eigen::VectorXd gd = Eigen::VectorXd::Zero(nodes), go = Eigen::VectorXd::Zero(nodes - 1);
  const double h = drift.h;
  for (Eigen::Index n = 0; n + 1 < nodes; ++n) {
    const double d = (a[n + 1] - a[n]) / dt;
    const double r0 = d + h * drift.f(a[n]);
    const double r1 = d + h * drift.f(a[n + 1]);
    lin.value += c * (r0 * r0 + r1 * r1);
    const double alpha = -1.0 / dt + h * drift.df(a[n]), beta = 1.0 / dt;
    const double gamma = -1.0 / dt, delta = 1.0 / dt + h * drift.df(a[n + 1]);
    grad[n] += 2.0 * c * (r0 * alpha + r1 * gamma);
    grad[n + 1] += 2.0 * c * (r0 * beta + r1 * delta);
    if (with_hessian) {
      const double gn_nn = 2.0 * c * (alpha * alpha + gamma * gamma);
      const double gn_mm = 2.0 * c * (beta * beta + delta * delta);
      const double gn_nm = 2.0 * c * (alpha * beta + gamma * delta);
      gd[n] += gn_nn;
      gd[n + 1] += gn_mm;
      go[n] += gn_nm;
      hd[n] += gn_nn + 2.0 * c * r0 * h * drift.d2f(a[n]);
      hd[n + 1] += gn_mm + 2.0 * c * r1 * h * drift.d2f(a[n + 1]);
      ho[n] += gn_nm;
    }
  }
  lin.gradient = grad.segment(1, m);
  if (with_hessian) {
    lin.diag = hd.segment(1, m);
    lin.off = ho.segment(1, std::max<Eigen::Index>(m - 1, 0));
    lin.gn_diag = gd.segment(1, m);
    lin.gn_off = go.segment(1, std::max<Eigen::Index>(m - 1, 0));
  }
  return lin;
}

// RK4 for (a, a') under a'' = h^2 F F'. Fills `out` with a at every node when non-null.
double shoot(double a0, double slope, double horizon, int intervals, const Drift& drift,
             Eigen::VectorXd* out) {
  const double dt = horizon / intervals, h2 = drift.h * drift.h;
  auto acc = [&](double a) { return h2 * drift.f(a) * drift.df(a); };
  double a = a0, v = slope;
  if (out) (*out)[0] = a;
  for (int n = 0; n < intervals; ++n) {
    const double k1a = v, k1v = acc(a);
    const double k2a = v + 0.5 * dt * k1v, k2v = acc(a + 0.5 * dt * k1a);
    const double k3a = v + 0.5 * dt * k2v, k3v = acc(a + 0.5 * dt * k2a);
    const double k4a = v + dt * k3v, k4v = acc(a + dt * k3a);
    a += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (out) (*out)[n + 1] = a;
  }
  return a;
}

}  // namespace

MeanPath MeanPath::linear(double xi, double horizon, int intervals) {
  MeanPath p;
  p.times = Eigen::VectorXd::LinSpaced(intervals + 1, 0.0, horizon);
  p.values = Eigen::VectorXd::LinSpaced(intervals + 1, -xi, xi);
  return p;
}

std::string to_string(RateMethod m) {
  switch (m) {
    case RateMethod::H0ClosedForm: return "h0";
    case RateMethod::SmallHClosedForm: return "small-h";
    case RateMethod::ReducedMinimization: return "minimize";
    case RateMethod::GaussianPath: return "gaussian-path";
    case RateMethod::Bvp: return "bvp";
  }
  return "unknown";
}

RateMethod rate_method_from_string(const std::string& s) {
  for (auto m : {RateMethod::H0ClosedForm, RateMethod::SmallHClosedForm,
                 RateMethod::ReducedMinimization, RateMethod::GaussianPath, RateMethod::Bvp})
    if (to_string(m) == s) return m;
  throw ParameterError("unknown rate method '" + s + "'");
}

double rate_h0(double xi0, double sigma, double horizon) {
  return 2.0 * xi0 * xi0 / (sigma * sigma * horizon);
}

double rate_small_h(const ModelParams& p, double horizon) {
  const auto e = small_h_equilibrium(p);
  return 2.0 * e.xi0 / (p.sigma * p.sigma * horizon) * (e.xi0 + 2.0 * p.h * e.xi1);
}

double reduced_rate_functional(const MeanPath& path, const ModelParams& p) {
  check_path(path);
  const double dt = path.step(), s = p.spread();
  const auto& a = path.values;
  double acc = 0.0;
  for (Eigen::Index n = 0; n + 1 < a.size(); ++n) {
    const double d = (a[n + 1] - a[n]) / dt;
    const double r0 = d + p.h * reduced_drift(a[n], s);
    const double r1 = d + p.h * reduced_drift(a[n + 1], s);
    acc += 0.5 * dt * (r0 * r0 + r1 * r1);
  }
  return acc / (2.0 * p.sigma * p.sigma);
}

double gaussian_path_rate(const MeanPath& path, const ModelParams& p) {
  check_path(path);
  const double dt = path.step(), v = p.spread(), h = p.h;
  const auto& a = path.values;
  auto integrand = [&](double d, double at) {
    const auto m = gaussian_force_moments(at, v);
    return d * d + 2.0 * h * d * m.mean + h * h * m.second;
  };
  double acc = 0.0;
  for (Eigen::Index n = 0; n + 1 < a.size(); ++n) {
    const double d = (a[n + 1] - a[n]) / dt;
    acc += 0.5 * dt * (integrand(d, a[n]) + integrand(d, a[n + 1]));
  }
  return acc / (2.0 * p.sigma * p.sigma);
}

Eigen::VectorXd reduced_functional_gradient(const MeanPath& path, const ModelParams& p) {
  check_path(path);
  return linearize(path.values, path.step(), p.sigma, Drift{p.h, p.spread()}, false).gradient;
}

double transition_endpoint(const ModelParams& p) { return equilibrium_mean(p); }

RateEstimate minimize_reduced(const ModelParams& p, double horizon, int intervals,
                              std::optional<double> xi, const MinimizeOptions& opts) {
  if (intervals < 2) throw ParameterError("minimization needs at least 2 intervals");
  const double endpoint = xi ? *xi : transition_endpoint(p);
  MeanPath path = MeanPath::linear(endpoint, horizon, intervals);
  const Drift drift{p.h, p.spread()};
  const double dt = path.step();
  Eigen::VectorXd& a = path.values;
  const Eigen::Index m = a.size() - 2;

  Linearization lin = linearize(a, dt, p.sigma, drift, true);
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (lin.gradient.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) break;
    Eigen::VectorXd step;
    if (!solve_spd_tridiagonal(lin.diag, lin.off, -lin.gradient, step) &&
        !solve_spd_tridiagonal(lin.gn_diag, lin.gn_off, -lin.gradient, step))
      throw NumericalError("reduced minimization: singular Newton system");
    double scale = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opts.max_halvings; ++k, scale *= 0.5) {
      Eigen::VectorXd trial = a;
      trial.segment(1, m) += scale * step;
      Linearization next = linearize(trial, dt, p.sigma, drift, true);
      if (next.value <= lin.value * (1.0 + 1e-14)) {
        a = trial;
        lin = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  const double residual = lin.gradient.lpNorm<Eigen::Infinity>();
  if (!(residual < opts.gradient_tolerance)) {
    std::ostringstream msg;
    msg << "reduced minimization did not converge in " << it << " iterations (gradient "
        << residual << ")";
    throw NumericalError(msg.str());
  }
  RateEstimate out;
  out.value = reduced_rate_functional(path, p);
  out.method = RateMethod::ReducedMinimization;
  out.iterations = it;
  out.el_residual = residual;
  out.path = std::move(path);
  return out;
}

MeanPath optimal_path_bvp(const ModelParams& p, double horizon, int intervals,
                          std::optional<double> xi) {
  if (intervals < 2) throw ParameterError("shooting needs at least 2 intervals");
  const double endpoint = xi ? *xi : transition_endpoint(p);
  const Drift drift{p.h, p.spread()};
  auto miss = [&](double slope) {
    return shoot(-endpoint, slope, horizon, intervals, drift, nullptr) - endpoint;
  };
  constexpr double kTol = 1e-9;
  double s0 = 2.0 * endpoint / horizon;
  double f0 = miss(s0);
  double best = s0;
  if (std::abs(f0) >= kTol) {
    // Bracket the root by expanding symmetrically around the linear-path slope.
    double width = std::max(0.05 * std::abs(s0), 1e-6);
    double lo = s0, hi = s0, flo = f0, fhi = f0;
    bool found = false;
    for (int k = 0; k < 60 && !found; ++k, width *= 2.0) {
      lo = s0 - width;
      hi = s0 + width;
      flo = miss(lo);
      fhi = miss(hi);
      if (std::isfinite(flo) && std::isfinite(fhi) && (flo < 0) != (fhi < 0)) found = true;
    }
    if (!found) throw NumericalError("shooting bracket not found");
    // Illinois variant of regula falsi.
    int side = 0;
    for (int it = 0; it < 200; ++it) {
      const double s = (lo * fhi - hi * flo) / (fhi - flo);
      const double fs = miss(s);
      best = s;
      if (std::abs(fs) < kTol) break;
      if ((fs < 0) == (flo < 0)) {
        lo = s;
        flo = fs;
        if (side == -1) fhi *= 0.5;
        side = -1;
      } else {
        hi = s;
        fhi = fs;
        if (side == 1) flo *= 0.5;
        side = 1;
      }
      if (it == 199) throw NumericalError("shooting did not converge");
    }
  }
  MeanPath path;
  path.times = Eigen::VectorXd::LinSpaced(intervals + 1, 0.0, horizon);
  path.values.resize(intervals + 1);
  shoot(-endpoint, best, horizon, intervals, drift, &path.values);
  return path;
}

TransitionProbability transition_probability_ld(const RateEstimate& rate, int n_agents) {
  if (n_agents < 1) throw ParameterError("N must be at least 1");
  const double log_p = rate.implied_log_probability(n_agents);
  return {std::exp(log_p), log_p};
}

}  // namespace mfrisk
