#pragma once

// Donaldson functional, heat flow with exponential stepping, and outcome classification.

#include "higgsflow/gauge.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace higgsflow {

struct FlowConfig {
  double dt_init = 1e-3;
  double dt_max = 5e-2;
  double t_max = 10.0;
  int max_steps = 10000;
  double deviation_target = 1e-3;  // xi
  bool deviation_target_relative = false;  // xi is a fraction of the initial sup deviation
  double eig_floor = MetricField::kDefaultEigFloor;
  double monotonicity_slack = 1e-10;  // relative, applied as slack * (1 + |L|)
  double dt_min = 1e-12;
  double dt_growth = 1.2;
  int growth_interval = 10;
  // classification heuristics
  double diverging_drop = 10.0;  // required decrease of L for a diverging verdict
  double deviation_floor = 0.0;  // sup deviation must stay above max(floor, xi)

  void validate() const {
    if (!(dt_init > 0.0) || !(dt_max > 0.0) || !(t_max > 0.0))
      throw ValidationError("FlowConfig: dt_init, dt_max and t_max must be positive");
    if (dt_init > dt_max) throw ValidationError("FlowConfig: dt_init must not exceed dt_max");
    if (max_steps < 1) throw ValidationError("FlowConfig: max_steps must be >= 1");
    if (!(deviation_target > 0.0)) throw ValidationError("FlowConfig: deviation_target must be positive");
    if (!(eig_floor > 0.0)) throw ValidationError("FlowConfig: eig_floor must be positive");
    if (monotonicity_slack < 0.0) throw ValidationError("FlowConfig: monotonicity_slack must be >= 0");
  }
};

enum class FlowStatus { reached_target, reached_t_max, step_failure };
enum class FlowClass { approx_hym_reached, bounded_below_plateau, diverging };

inline const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::reached_target: return "reached_target";
    case FlowStatus::reached_t_max: return "reached_t_max";
    case FlowStatus::step_failure: return "step_failure";
  }
  return "?";
}

inline const char* to_string(FlowClass c) {
  switch (c) {
    case FlowClass::approx_hym_reached: return "approx_hym_reached";
    case FlowClass::bounded_below_plateau: return "bounded_below_plateau";
    case FlowClass::diverging: return "diverging";
  }
  return "?";
}

struct TraceRow {
  double t = 0.0;
  double L = 0.0;
  double dev_sup = 0.0;
  double dev_l2 = 0.0;
  double min_eig = 0.0;
  double deg_drift = 0.0;
  double dt = 0.0;
};

/// Row 0 is the initial state; its dt column is the step the controller starts with.
struct FlowTrace {
  std::string example;
  std::vector<TraceRow> rows;
  FlowStatus status = FlowStatus::reached_t_max;
  double c = 0.0;
  double target = 0.0;  // absolute xi actually used
  int rejected_steps = 0;
  std::string diagnostic;
  MetricField final_metric;
};

/// Pointwise k exp(s eta) for k-self-adjoint eta.
inline MetricField metric_geodesic_point(const MetricField& k, const EndoField& eta, double s) {
  EndoField out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i)
    out[i] = k[i] * linalg::metric_self_adjoint_function(eta[i], k[i],
                                                          [s](double x) { return std::exp(s * x); });
  return MetricField(std::move(out));
}

enum class QuadratureRule { trapezoid, romberg };

/// Composite trapezoid sums on the nested sub-grids of an equispaced sample set, refined by
/// Richardson extrapolation when the panel count is a power of two.
inline double integrate_unit_interval(const std::vector<double>& samples, QuadratureRule rule) {
  const int panels = static_cast<int>(samples.size()) - 1;
  auto trapezoid = [&](int stride) {
    double acc = 0.5 * (samples.front() + samples.back());
    for (int q = stride; q < panels; q += stride) acc += samples[q];
    return acc * stride / panels;
  };
  if (rule == QuadratureRule::trapezoid || (panels & (panels - 1)) != 0) return trapezoid(1);
  std::vector<double> row;
  for (int stride = panels; stride >= 1; stride /= 2) {
    std::vector<double> next{trapezoid(stride)};
    double factor = 4.0;
    for (double prev : row) {
      next.push_back(next.back() + (next.back() - prev) / (factor - 1.0));
      factor *= 4.0;
    }
    row = std::move(next);
  }
  return row.back();
}

/// L(h, k) = int_0^1 a^2 sum_s tr(eta (K_{h_s} - c)) ds along h_s = k exp(s eta),
/// eta = log(k^{-1} h), sampled on quad_points equispaced nodes.
inline double donaldson_functional(const BackgroundBundle& bundle, const HiggsField& phi,
                                   const MetricField& h, const MetricField& k, double c,
                                   int quad_points = 33,
                                   QuadratureRule rule = QuadratureRule::romberg) {
  if (quad_points < 2) throw ValidationError("donaldson_functional: quad_points must be >= 2");
  if (h.size() != k.size()) throw DimensionError("donaldson_functional: size mismatch");
  // identical endpoints: eta vanishes and so does every sample
  bool same = true;
  for (std::size_t i = 0; i < h.size() && same; ++i) same = h[i] == k[i];
  if (same) return 0.0;
  const auto& surf = bundle.surface();
  EndoField eta(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) eta[i] = linalg::relative_log(k[i], h[i]);

  const int panels = quad_points - 1;
  std::vector<double> samples(quad_points);
  for (int q = 0; q <= panels; ++q) {
    const double s = static_cast<double>(q) / panels;
    const MetricField hs = q == 0 ? k : (q == panels ? h : metric_geodesic_point(k, eta, s));
    const auto kf = mean_curvature(bundle, hs, phi);
    double g = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const Mat dev = kf[i] - c * Mat::Identity(kf[i].rows(), kf[i].cols());
      g += (eta[i] * dev).trace().real();
    }
    samples[q] = g * surf.cell_area();
  }
  return integrate_unit_interval(samples, rule);
}

/// Closed form of the same functional: difference of the lattice potential.
inline double donaldson_functional_exact(const BackgroundBundle& bundle, const HiggsField& phi,
                                         const MetricField& h, const MetricField& k, double c) {
  return donaldson_potential(bundle, phi, h, c) - donaldson_potential(bundle, phi, k, c);
}

/// h' = h exp(-dt (K - c)) given the mean curvature K at h. Returns nullopt when the
/// update falls below the eigenvalue floor.
inline std::optional<MetricField> flow_update(const MetricField& h, const EndoField& k, double c,
                                              double dt, double eig_floor) {
  if (!(dt > 0.0)) throw ValidationError("flow_step: dt must be positive");
  EndoField out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Mat x = k[i] - c * Mat::Identity(k[i].rows(), k[i].cols());
    const auto e = linalg::metric_self_adjoint_eig(x, h[i]);
    const Eigen::VectorXd f = (-dt * e.values.array()).exp();
    const Mat lq = e.chol * e.q;
    out[i] = linalg::hermitian_part(lq * f.cast<Complex>().asDiagonal() * lq.adjoint());
    if (!out[i].allFinite() || linalg::min_eigenvalue(out[i]) < eig_floor) return std::nullopt;
  }
  return MetricField(std::move(out), eig_floor);
}

inline std::optional<MetricField> flow_step(const BackgroundBundle& bundle, const HiggsField& phi,
                                            const MetricField& h, double c, double dt,
                                            double eig_floor = MetricField::kDefaultEigFloor) {
  return flow_update(h, mean_curvature(bundle, h, phi), c, dt, eig_floor);
}

/// Called after every accepted state (including the initial one) with the row index.
using FlowObserver =
    std::function<void(std::size_t row, const MetricField& h, const CurvatureField& curvature)>;

inline FlowTrace run_flow(const BackgroundBundle& bundle, const HiggsField& phi,
                          const MetricField& h0, const MetricField& k, const FlowConfig& config,
                          const FlowObserver& observer = {}) {
  config.validate();
  const auto& surf = bundle.surface();
  FlowTrace trace;
  trace.c = hym_constant(slope(bundle, h0), surf.area(), surf.complex_dim());
  const double c = trace.c;
  const double potential_k = donaldson_potential(bundle, phi, k, c);

  auto degree_of = [](const CurvatureField& cf) {
    double acc = 0.0;
    for (const auto& p : cf.plaquette) acc += p.trace().real();
    return acc / (2.0 * std::numbers::pi);
  };

  MetricField h = h0;
  auto ev = evaluate_curvature(bundle, phi, h);
  double potential = ev.energy - c * ev.log_det_integral;
  const double degree0 = degree_of(ev.curvature);

  auto make_row = [&](double t, double dt) {
    TraceRow row;
    row.t = t;
    row.L = potential - potential_k;
    row.dev_sup = deviation_norm_sup(ev.curvature.contracted, c, h);
    row.dev_l2 = deviation_norm_l2(surf, ev.curvature.contracted, c, h);
    row.min_eig = h.min_eigenvalue();
    row.deg_drift = std::abs(degree_of(ev.curvature) - degree0);
    row.dt = dt;
    return row;
  };

  double dt = config.dt_init;
  double t = 0.0;
  trace.rows.push_back(make_row(0.0, dt));
  if (observer) observer(0, h, ev.curvature);
  trace.target = config.deviation_target_relative
                     ? config.deviation_target * trace.rows.front().dev_sup
                     : config.deviation_target;

  int accepted = 0;
  int since_growth = 0;
  long attempts = 0;
  const long max_attempts = 4L * config.max_steps + 100;
  trace.status = FlowStatus::reached_t_max;
  if (trace.rows.front().dev_sup <= trace.target) {
    trace.status = FlowStatus::reached_target;
  } else {
    while (accepted < config.max_steps && t < config.t_max && attempts < max_attempts) {
      ++attempts;
      const double step = std::min(dt, config.t_max - t);
      auto next = flow_update(h, ev.curvature.contracted, c, step, config.eig_floor);
      std::optional<CurvatureEvaluation> next_ev;
      double next_potential = 0.0;
      if (next) {
        next_ev = evaluate_curvature(bundle, phi, *next);
        next_potential = next_ev->energy - c * next_ev->log_det_integral;
      }
      const double slack = config.monotonicity_slack * (1.0 + std::abs(potential - potential_k));
      if (!next || !(next_potential <= potential + slack)) {
        ++trace.rejected_steps;
        since_growth = 0;
        dt = 0.5 * step;
        if (dt < config.dt_min) {
          trace.status = FlowStatus::step_failure;
          trace.diagnostic = std::string("step size fell below ") + std::to_string(config.dt_min) +
                             " at t = " + std::to_string(t) +
                             (next ? " (functional increase)" : " (metric below eigenvalue floor)");
          break;
        }
        continue;
      }
      h = std::move(*next);
      ev = std::move(*next_ev);
      potential = next_potential;
      t += step;
      ++accepted;
      trace.rows.push_back(make_row(t, step));
      if (observer) observer(trace.rows.size() - 1, h, ev.curvature);
      if (++since_growth >= config.growth_interval) {
        dt = std::min(dt * config.dt_growth, config.dt_max);
        since_growth = 0;
      }
      if (trace.rows.back().dev_sup <= trace.target) {
        trace.status = FlowStatus::reached_target;
        break;
      }
    }
  }
  trace.final_metric = std::move(h);
  return trace;
}

struct GradientCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

/// Compares the flow's rate of descent -||K - c||_{L2}^2 with a forward difference of L
/// across one flow step of size dt_fd.
inline GradientCheck gradient_check(const BackgroundBundle& bundle, const HiggsField& phi,
                                    const MetricField& h, const MetricField& k, double c,
                                    double dt_fd = 1e-5, int quad_points = 33,
                                    QuadratureRule rule = QuadratureRule::romberg) {
  GradientCheck out;
  const auto kf = mean_curvature(bundle, h, phi);
  const double l2 = deviation_norm_l2(bundle.surface(), kf, c, h);
  out.analytic = -l2 * l2;
  const auto next = flow_update(h, kf, c, dt_fd, std::numeric_limits<double>::min());
  if (!next) throw ConditioningError("gradient_check: flow step left the positive cone");
  const double l_next = donaldson_functional(bundle, phi, *next, k, c, quad_points, rule);
  const double l_here = donaldson_functional(bundle, phi, h, k, c, quad_points, rule);
  out.numeric = (l_next - l_here) / dt_fd;
  out.rel_err = std::abs(out.analytic - out.numeric) / (std::abs(out.analytic) + 1e-15);
  return out;
}

inline FlowClass classify(const FlowTrace& trace, const FlowConfig& config) {
  if (trace.rows.empty()) throw ValidationError("classify: empty trace");
  double min_dev = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.rows) min_dev = std::min(min_dev, r.dev_sup);
  const double target = trace.target > 0.0 ? trace.target : config.deviation_target;
  if (min_dev <= target) return FlowClass::approx_hym_reached;
  const double drop = trace.rows.front().L - trace.rows.back().L;
  if (drop > config.diverging_drop && min_dev > std::max(config.deviation_floor, target))
    return FlowClass::diverging;
  return FlowClass::bounded_below_plateau;
}

}  // namespace higgsflow
