#pragma once
//
// Curvature flows in u-coordinates and their time integration.
//
//   p-th Calabi, Euclidean:   u' = Delta_p K
//   p-th Calabi, hyperbolic:  u' = Delta_p K - A K
//   Ricci:                    u' = -K            (normalized: k_av - K)
//   normalized p-th Calabi:   u' = p L g,  g_j = |k_av - K_j|^{p-2} (k_av - K_j)
//   graph p-th Calabi:        u' = Delta_p K with frozen edge weights omega
//
// where Delta_p f_i = sum_{edges ij} w_ij |f_j - f_i|^{p-2} (f_j - f_i).
//

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cpflow/error.hpp"
#include "cpflow/geometry.hpp"
#include "cpflow/mesh.hpp"
#include "cpflow/potential.hpp"

namespace cpflow {

using EdgeList = std::vector<std::array<std::size_t, 2>>;

inline EdgeList edge_list(const Triangulation& t) {
  EdgeList out;
  out.reserve(t.edge_count());
  for (const auto& e : t.edges()) out.push_back(e.vertices);
  return out;
}

/// sign(x) |x|^(p-1), the map x -> |x|^{p-2} x extended by 0 at 0.
inline double signed_power(double x, double p) {
  if (x == 0.0) return 0.0;
  if (p == 2.0) return x;
  return std::copysign(std::pow(std::abs(x), p - 1.0), x);
}

inline Eigen::VectorXd p_laplacian(const EdgeList& edges, const std::vector<double>& weights, const Eigen::VectorXd& f,
                                   double p) {
  if (!(p > 1.0)) throw DomainError("p must exceed 1");
  if (weights.size() != edges.size()) throw DomainError("one weight per edge required");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto i = static_cast<Eigen::Index>(edges[e][0]);
    const auto j = static_cast<Eigen::Index>(edges[e][1]);
    const double flux = weights[e] * signed_power(f[j] - f[i], p);
    out[i] += flux;
    out[j] -= flux;
  }
  return out;
}

inline Eigen::VectorXd p_laplacian(const Triangulation& t, const std::vector<double>& weights, const Eigen::VectorXd& f,
                                   double p) {
  return p_laplacian(edge_list(t), weights, f, p);
}

// ---------------------------------------------------------------------------
// Flow specification

enum class FlowKind { PCalabi, Ricci, RicciNormalized, PCalabiNormalized, GraphPCalabi };

inline const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::PCalabi: return "p-calabi";
    case FlowKind::Ricci: return "ricci";
    case FlowKind::RicciNormalized: return "ricci-normalized";
    case FlowKind::PCalabiNormalized: return "p-calabi-normalized";
    case FlowKind::GraphPCalabi: return "graph-p-calabi";
  }
  return "?";
}

struct FlowSpec {
  FlowKind kind = FlowKind::PCalabi;
  double p = 2.0;
  Background background = Background::Euclidean;
  std::optional<std::vector<double>> fixed_weights;   // graph flow only, per edge, > 0
  std::optional<Eigen::VectorXd> vertex_measure;      // graph flow only, default 1

  void validate(const Triangulation& t) const {
    if (!(p > 1.0)) throw DomainError("p must exceed 1");
    if (kind == FlowKind::GraphPCalabi) {
      if (!fixed_weights) throw DomainError("graph p-Calabi flow needs fixed edge weights");
      if (fixed_weights->size() != t.edge_count()) throw DomainError("one fixed weight per edge required");
      for (double w : *fixed_weights)
        if (!(w > 0.0)) throw DomainError("fixed edge weights must be positive");
      if (vertex_measure) {
        if (static_cast<std::size_t>(vertex_measure->size()) != t.vertex_count())
          throw DomainError("one vertex measure per vertex required");
        if (!(vertex_measure->minCoeff() > 0.0)) throw DomainError("vertex measure must be positive");
      }
    } else if (fixed_weights || vertex_measure) {
      throw DomainError("fixed weights and vertex measure apply to the graph flow only");
    }
    if (background == Background::Hyperbolic &&
        (kind == FlowKind::RicciNormalized || kind == FlowKind::PCalabiNormalized || kind == FlowKind::GraphPCalabi))
      throw DomainError(std::string(to_string(kind)) + " flow is defined in Euclidean background only");
  }

  bool needs_derivatives() const { return kind == FlowKind::PCalabi || kind == FlowKind::PCalabiNormalized; }
};

// ---------------------------------------------------------------------------
// Right-hand sides (du/dt) from an evaluated geometry state

inline Eigen::VectorXd rhs_p_calabi_euclidean(const Triangulation& t, const GeometryState& st, double p) {
  if (st.background != Background::Euclidean) throw DomainError("Euclidean flow on hyperbolic state");
  if (!st.has_derivatives) throw DomainError("state lacks B");
  return p_laplacian(t, st.B, st.curvatures, p);
}

inline Eigen::VectorXd rhs_p_calabi_hyperbolic(const Triangulation& t, const GeometryState& st, double p) {
  if (st.background != Background::Hyperbolic) throw DomainError("hyperbolic flow on Euclidean state");
  if (!st.has_derivatives) throw DomainError("state lacks B and A");
  return p_laplacian(t, st.B, st.curvatures, p) - st.A.cwiseProduct(st.curvatures);
}

inline Eigen::VectorXd rhs_ricci(const GeometryState& st, bool normalized) {
  if (normalized) {
    if (st.background != Background::Euclidean) throw DomainError("normalized Ricci flow is Euclidean only");
    return (st.k_av - st.curvatures.array()).matrix();
  }
  return -st.curvatures;
}

inline Eigen::VectorXd rhs_p_calabi_normalized(const GeometryState& st, double p) {
  if (st.background != Background::Euclidean) throw DomainError("normalized p-Calabi flow is Euclidean only");
  if (!st.has_derivatives) throw DomainError("state lacks L");
  if (!(p > 1.0)) throw DomainError("p must exceed 1");
  Eigen::VectorXd g(st.curvatures.size());
  for (Eigen::Index j = 0; j < g.size(); ++j) g[j] = signed_power(st.k_av - st.curvatures[j], p);
  return p * (st.L * g);
}

inline Eigen::VectorXd rhs_graph_p_calabi(const Triangulation& t, const GeometryState& st, const FlowSpec& spec) {
  if (!spec.fixed_weights) throw DomainError("graph p-Calabi flow needs fixed edge weights");
  Eigen::VectorXd out = p_laplacian(t, *spec.fixed_weights, st.curvatures, spec.p);
  if (spec.vertex_measure) out = out.cwiseQuotient(*spec.vertex_measure);
  return out;
}

inline Eigen::VectorXd flow_rhs(const Triangulation& t, const GeometryState& st, const FlowSpec& spec) {
  switch (spec.kind) {
    case FlowKind::PCalabi:
      return st.background == Background::Euclidean ? rhs_p_calabi_euclidean(t, st, spec.p)
                                                     : rhs_p_calabi_hyperbolic(t, st, spec.p);
    case FlowKind::Ricci: return rhs_ricci(st, false);
    case FlowKind::RicciNormalized: return rhs_ricci(st, true);
    case FlowKind::PCalabiNormalized: return rhs_p_calabi_normalized(st, spec.p);
    case FlowKind::GraphPCalabi: return rhs_graph_p_calabi(t, st, spec);
  }
  throw DomainError("unknown flow kind");
}

// ---------------------------------------------------------------------------
// Energies

inline double energy_p_calabi(const Eigen::VectorXd& K, double k_av, double p) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < K.size(); ++i) sum += std::pow(std::abs(k_av - K[i]), p);
  return sum;
}

/// Dirichlet p-energy: sum over edges of w_e |K_j - K_i|^p.
inline double energy_dirichlet(const EdgeList& edges, const Eigen::VectorXd& K, const std::vector<double>& weights,
                               double p) {
  double sum = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e)
    sum += weights[e] * std::pow(std::abs(K[static_cast<Eigen::Index>(edges[e][1])] - K[static_cast<Eigen::Index>(edges[e][0])]), p);
  return sum;
}

inline double energy_dirichlet(const Triangulation& t, const Eigen::VectorXd& K, const std::vector<double>& weights,
                               double p) {
  return energy_dirichlet(edge_list(t), K, weights, p);
}

// ---------------------------------------------------------------------------
// Integration

enum class Method { ExplicitEuler, RK4, AdaptiveRK45 };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ExplicitEuler: return "euler";
    case Method::RK4: return "rk4";
    case Method::AdaptiveRK45: return "rk45";
  }
  return "?";
}

struct IntegratorConfig {
  Method method = Method::AdaptiveRK45;
  double dt = 1e-3;
  double t_max = 100.0;
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
  double stop_curvature_tol = 1e-9;
  std::size_t sample_every = 1;
  std::size_t max_steps = 50'000'000;
  int max_retries = 40;              // consecutive step halvings before giving up
  bool track_potential = true;       // fill the F column (costs one quadrature per sample)

  void validate() const {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || !(stop_curvature_tol > 0.0)) throw DomainError("tolerances must be positive");
    if (sample_every == 0) throw DomainError("sample_every must be at least 1");
  }
};

enum class ExitReason { Converged, HorizonReached, BlowUp, Degenerate };

inline const char* to_string(ExitReason e) {
  switch (e) {
    case ExitReason::Converged: return "converged";
    case ExitReason::HorizonReached: return "horizonReached";
    case ExitReason::BlowUp: return "blowUp";
    case ExitReason::Degenerate: return "degenerate";
  }
  return "?";
}

struct Sample {
  double t = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd K;
  double F = 0.0;      // Ricci potential relative to the context base point
  double E = 0.0;      // E_p (Calabi/Ricci flows) or Dirichlet energy (graph flow)
  double drift = 0.0;  // |sum u(t) - sum u(0)|
};

struct Trajectory {
  std::vector<Sample> samples;
  std::optional<ExitReason> exit;
  std::size_t steps_taken = 0;
  std::size_t steps_rejected = 0;
  double final_max_curvature_error = std::numeric_limits<double>::infinity();
  double wall_time_seconds = 0.0;
  std::string message;
  Eigen::VectorXd target;  // K_target used for convergence

  const Sample& last() const { return samples.back(); }
};

inline Eigen::VectorXd curvature_target(const Triangulation& t, const FlowSpec& spec) {
  const auto n = static_cast<Eigen::Index>(t.vertex_count());
  if (spec.background == Background::Hyperbolic) return Eigen::VectorXd::Zero(n);
  return Eigen::VectorXd::Constant(n, average_curvature(t));
}

/// Geometry at u plus the flow's velocity there.
struct FlowEvaluation {
  GeometryState state;
  Eigen::VectorXd velocity;
};

inline FlowEvaluation evaluate_flow(const WeightedMesh& m, const FlowSpec& spec, const Eigen::VectorXd& u) {
  const PackingMetric metric = from_u({u, spec.background});
  FlowEvaluation ev;
  ev.state = spec.needs_derivatives() ? evaluate(m, metric) : curvatures(m, metric);
  if (spec.needs_derivatives()) ev.state.has_derivatives = true;
  ev.velocity = flow_rhs(m.topology(), ev.state, spec);
  if (!ev.velocity.allFinite()) throw OverflowError("non-finite flow velocity");
  return ev;
}

namespace detail {

// Dormand-Prince 5(4) tableau
struct DormandPrince {
  static constexpr double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static constexpr double b5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
  static constexpr double b4[7] = {5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
};

struct StepResult {
  Eigen::VectorXd u;
  FlowEvaluation end;  // evaluation at the new point
  double error = 0.0;  // scaled error norm (adaptive only)
  double spectral = 0.0;  // estimate of the local Jacobian's spectral radius (adaptive only)
};

// h * spectral radius stays below this. Near the fixed point stiff modes then
// keep decaying, and for p < 2 the explicit step cannot settle into a 2-cycle
// around a curvature tie (the cycle needs h * rho >= 1).
inline constexpr double kStiffStepCap = 0.5;
// The cap only applies once the curvature error is within this factor of the
// stop tolerance. For p < 2 rho grows without bound as two curvatures meet, and
// capping far from the fixed point would stall the step at a transient tie.
inline constexpr double kStiffCapWindow = 1e3;

}  // namespace detail

/// Integrates the flow from u0, re-assembling geometry at every stage.
inline Trajectory integrate(const WeightedMesh& m, const UCoordinates& u0, const FlowSpec& spec,
                            const IntegratorConfig& cfg) {
  const auto clock_start = std::chrono::steady_clock::now();
  const auto& t = m.topology();
  spec.validate(t);
  cfg.validate();
  if (u0.background != spec.background) throw DomainError("initial coordinates use a different background");
  if (static_cast<std::size_t>(u0.u.size()) != t.vertex_count()) throw DomainError("initial coordinates have wrong size");

  Trajectory traj;
  traj.target = curvature_target(t, spec);
  const auto edges = edge_list(t);
  const double sum0 = u0.u.sum();
  std::optional<PotentialContext> ctx;
  if (cfg.track_potential) ctx = make_potential_context(m, spec.background);

  FlowEvaluation current;
  try {
    current = evaluate_flow(m, spec, u0.u);
  } catch (const Error& e) {
    throw DomainError(std::string("invalid initial coordinates: ") + e.what());
  }

  auto energy_of = [&](const GeometryState& st) {
    if (spec.kind == FlowKind::GraphPCalabi) return energy_dirichlet(edges, st.curvatures, *spec.fixed_weights, spec.p);
    const double target = spec.background == Background::Euclidean ? st.k_av : 0.0;
    return energy_p_calabi(st.curvatures, target, spec.p);
  };
  auto curvature_error = [&](const GeometryState& st) { return (st.curvatures - traj.target).cwiseAbs().maxCoeff(); };

  Eigen::VectorXd u = u0.u;
  double time = 0.0;
  Eigen::VectorXd last_sample_u = u;
  double last_sample_F = ctx ? potential_value(*ctx, u) : 0.0;
  auto record = [&](const GeometryState& st) {
    Sample s;
    s.t = time;
    s.u = u;
    s.K = st.curvatures;
    if (ctx) {
      last_sample_F += segment_integral(*ctx, last_sample_u, u, 1e-13);
      last_sample_u = u;
    }
    s.F = last_sample_F;
    s.E = energy_of(st);
    s.drift = std::abs(u.sum() - sum0);
    traj.samples.push_back(std::move(s));
  };
  auto finish = [&](ExitReason why, std::string msg = {}) {
    traj.exit = why;
    traj.message = std::move(msg);
    traj.final_max_curvature_error = curvature_error(current.state);
    traj.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return traj;
  };

  record(current.state);
  if (curvature_error(current.state) < cfg.stop_curvature_tol) return finish(ExitReason::Converged);

  const double two_pi = 2.0 * std::numbers::pi;
  auto eval_checked = [&](const Eigen::VectorXd& x) {
    auto ev = evaluate_flow(m, spec, x);
    if (spec.background == Background::Hyperbolic && ev.state.curvatures.maxCoeff() >= two_pi)
      throw DegenerateError("curvature reached 2 pi");
    return ev;
  };

  using DP = detail::DormandPrince;
  auto attempt = [&](double h) -> detail::StepResult {
    detail::StepResult r;
    switch (cfg.method) {
      case Method::ExplicitEuler: {
        r.u = u + h * current.velocity;
        r.end = eval_checked(r.u);
        break;
      }
      case Method::RK4: {
        const Eigen::VectorXd& k1 = current.velocity;
        const Eigen::VectorXd k2 = eval_checked(u + 0.5 * h * k1).velocity;
        const Eigen::VectorXd k3 = eval_checked(u + 0.5 * h * k2).velocity;
        const Eigen::VectorXd k4 = eval_checked(u + h * k3).velocity;
        r.u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        r.end = eval_checked(r.u);
        break;
      }
      case Method::AdaptiveRK45: {
        std::array<Eigen::VectorXd, 7> k;
        Eigen::VectorXd x6;
        k[0] = current.velocity;
        for (int s = 1; s < 7; ++s) {
          Eigen::VectorXd x = u;
          for (int j = 0; j < s; ++j)
            if (DP::a[s][j] != 0.0) x += h * DP::a[s][j] * k[j];
          if (s == 6) {
            r.u = x;
            r.end = eval_checked(x);
            k[s] = r.end.velocity;
          } else {
            k[s] = eval_checked(x).velocity;
            if (s == 5) x6 = x;
          }
        }
        // Stages 6 and 7 share the abscissa t + h.
        const double dx = (r.u - x6).norm();
        if (dx > 0.0) r.spectral = (k[6] - k[5]).norm() / dx;
        Eigen::VectorXd err = Eigen::VectorXd::Zero(u.size());
        for (int s = 0; s < 7; ++s) err += h * (DP::b5[s] - DP::b4[s]) * k[s];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
          const double scale = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(u[i]), std::abs(r.u[i]));
          acc += std::pow(err[i] / scale, 2);
        }
        r.error = std::sqrt(acc / static_cast<double>(u.size()));
        break;
      }
    }
    return r;
  };

  double h = cfg.dt;
  int retries = 0;
  std::size_t since_sample = 0;
  ExitReason failure = ExitReason::BlowUp;
  std::string failure_msg;
  while (true) {
    if (traj.steps_taken >= cfg.max_steps) {
      record(current.state);
      return finish(ExitReason::HorizonReached, "step limit reached");
    }
    const double step = std::min(h, cfg.t_max - time);
    bool ok = false;
    detail::StepResult res;
    try {
      res = attempt(step);
      ok = cfg.method != Method::AdaptiveRK45 || res.error <= 1.0;
      if (!ok) {
        h = step * std::clamp(0.9 * std::pow(res.error, -0.2), 0.2, 1.0);
        ++traj.steps_rejected;
        continue;  // error-control rejections do not count against the retry budget
      }
    } catch (const DegenerateError& e) {
      failure = ExitReason::Degenerate;
      failure_msg = e.what();
    } catch (const Error& e) {
      failure = ExitReason::BlowUp;
      failure_msg = e.what();
    }
    if (!ok) {
      ++traj.steps_rejected;
      if (++retries > cfg.max_retries) {
        record(current.state);
        return finish(failure, failure_msg);
      }
      h = 0.5 * step;
      continue;
    }

    retries = 0;
    time = (step == cfg.t_max - time) ? cfg.t_max : time + step;
    u = res.u;
    current = std::move(res.end);
    ++traj.steps_taken;
    ++since_sample;

    const bool converged = curvature_error(current.state) < cfg.stop_curvature_tol;
    const bool horizon = time >= cfg.t_max;
    if (converged || horizon || since_sample >= cfg.sample_every) {
      record(current.state);
      since_sample = 0;
    }
    if (converged) return finish(ExitReason::Converged);
    if (horizon) return finish(ExitReason::HorizonReached);

    if (cfg.method == Method::AdaptiveRK45) {
      const double grow = res.error > 0.0 ? 0.9 * std::pow(res.error, -0.2) : 5.0;
      h = step * std::clamp(grow, 0.2, 5.0);
      if (res.spectral > 0.0 && curvature_error(current.state) < detail::kStiffCapWindow * cfg.stop_curvature_tol)
        h = std::min(h, detail::kStiffStepCap / res.spectral);
    } else {
      h = cfg.dt;
    }
  }
}

}  // namespace cpflow
