#pragma once
//
// Combinatorial Ricci potential F(u) = integral from a to u of sum_i (K_i - target_i) du_i.
// The 1-form is closed, so F is evaluated along straight segments. Its
// gradient is K - target and its Hessian is L = dK/du.
//

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cpflow/error.hpp"
#include "cpflow/geometry.hpp"
#include "cpflow/mesh.hpp"

namespace cpflow {

struct PotentialContext {
  WeightedMesh mesh;
  Background background = Background::Euclidean;
  UCoordinates base_point;
  Eigen::VectorXd target;  // k_av (Euclidean) or 0 (hyperbolic) per vertex
};

/// Context with the default base point: u = 0 (Euclidean) or r = 1 (hyperbolic).
inline PotentialContext make_potential_context(WeightedMesh mesh, Background bg,
                                               std::optional<UCoordinates> base = std::nullopt) {
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  PotentialContext ctx;
  ctx.background = bg;
  if (base) {
    if (base->background != bg || base->u.size() != n) throw DomainError("base point does not match mesh/background");
    ctx.base_point = *base;
  } else if (bg == Background::Euclidean) {
    ctx.base_point = {Eigen::VectorXd::Zero(n), bg};
  } else {
    ctx.base_point = to_u({Eigen::VectorXd::Ones(n), bg});
  }
  ctx.target = bg == Background::Euclidean ? Eigen::VectorXd::Constant(n, average_curvature(mesh.topology()))
                                           : Eigen::VectorXd::Zero(n);
  ctx.mesh = std::move(mesh);
  return ctx;
}

inline Eigen::VectorXd potential_gradient(const PotentialContext& ctx, const Eigen::VectorXd& u) {
  auto st = curvatures(ctx.mesh, from_u({u, ctx.background}));
  return st.curvatures - ctx.target;
}

// ---------------------------------------------------------------------------
// Quadrature

inline constexpr double kDefaultQuadratureTol = 1e-10;
inline constexpr int kQuadratureDepthCap = 40;

namespace detail {

struct SimpsonPanel {
  double a, fa, m, fm, b, fb, whole;
};

inline double adaptive_simpson(const std::function<double(double)>& g, const SimpsonPanel& p, double tol, int depth) {
  const double lm = 0.5 * (p.a + p.m), rm = 0.5 * (p.m + p.b);
  const double flm = g(lm), frm = g(rm);
  const double left = (p.m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
  const double right = (p.b - p.m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
  const double delta = left + right - p.whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= kQuadratureDepthCap) throw Error("adaptive quadrature did not reach tolerance within depth cap");
  return adaptive_simpson(g, {p.a, p.fa, lm, flm, p.m, p.fm, left}, 0.5 * tol, depth + 1) +
         adaptive_simpson(g, {p.m, p.fm, rm, frm, p.b, p.fb, right}, 0.5 * tol, depth + 1);
}

}  // namespace detail

/// Adaptive Simpson on [0, 1], started from four panels.
inline double integrate_unit_interval(const std::function<double(double)>& g, double tol) {
  constexpr int kPanels = 4;
  double total = 0.0;
  double fa = g(0.0);
  for (int k = 0; k < kPanels; ++k) {
    const double a = static_cast<double>(k) / kPanels, b = static_cast<double>(k + 1) / kPanels;
    const double m = 0.5 * (a + b);
    const double fm = g(m), fb = g(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += detail::adaptive_simpson(g, {a, fa, m, fm, b, fb, whole}, tol / kPanels, 0);
    fa = fb;
  }
  return total;
}

/// Integral of the potential's 1-form along the straight segment from -> to.
inline double segment_integral(const PotentialContext& ctx, const Eigen::VectorXd& from, const Eigen::VectorXd& to,
                               double tol = kDefaultQuadratureTol) {
  const Eigen::VectorXd dir = to - from;
  if (dir.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  auto g = [&](double s) -> double {
    const Eigen::VectorXd u = from + s * dir;
    return potential_gradient(ctx, u).dot(dir);
  };
  return integrate_unit_interval(g, tol);
}

inline double potential_value(const PotentialContext& ctx, const Eigen::VectorXd& u, double tol = kDefaultQuadratureTol) {
  return segment_integral(ctx, ctx.base_point.u, u, tol);
}

/// F evaluated along a polyline base -> waypoints... -> u (path independence checks).
inline double potential_value_along(const PotentialContext& ctx, const std::vector<Eigen::VectorXd>& waypoints,
                                    const Eigen::VectorXd& u, double tol = kDefaultQuadratureTol) {
  double sum = 0.0;
  Eigen::VectorXd prev = ctx.base_point.u;
  for (const auto& w : waypoints) {
    sum += segment_integral(ctx, prev, w, tol);
    prev = w;
  }
  return sum + segment_integral(ctx, prev, u, tol);
}

// ---------------------------------------------------------------------------
// Newton solver

enum class SolveStatus { Found, Diverged, MaxIterations };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Found: return "found";
    case SolveStatus::Diverged: return "diverged";
    case SolveStatus::MaxIterations: return "maxIterations";
  }
  return "?";
}

struct SolveStep {
  double gradient_norm = 0.0;
  double step_length = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIterations;
  std::optional<UCoordinates> solution;
  double final_gradient_norm = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::vector<SolveStep> step_history;
  bool regularized = false;
  std::string message;
};

struct NewtonOptions {
  double tol = 1e-10;              // max |K - target|
  std::size_t max_iter = 200;
  double armijo_c1 = 1e-4;
  int max_halvings = 60;
  double domain_margin = 1e-14;    // hyperbolic u stays below -margin
  std::size_t divergence_window = 20;
  double escape_bound = 50.0;      // |u - mean u| (Euclidean) or -u (hyperbolic) beyond this is divergence
  double step_tol = 1e-6;          // a converged point also needs max |Newton step| below this
};

inline SolveReport newton_solve(const PotentialContext& ctx, const UCoordinates& u_init, NewtonOptions opt = {}) {
  const auto bg = ctx.background;
  const auto n = static_cast<Eigen::Index>(ctx.mesh.vertex_count());
  if (u_init.background != bg || u_init.u.size() != n) throw DomainError("initial point does not match mesh/background");
  if (bg == Background::Hyperbolic && !(u_init.u.maxCoeff() < 0.0))
    throw DomainError("hyperbolic initial point must have all u < 0");

  SolveReport report;
  Eigen::VectorXd u = u_init.u;
  auto escaped = [&](const Eigen::VectorXd& v) {
    if (bg == Background::Euclidean) return (v.array() - v.mean()).abs().maxCoeff() > opt.escape_bound;
    return -v.minCoeff() > opt.escape_bound;
  };

  GeometryState st;
  try {
    st = evaluate(ctx.mesh, from_u({u, bg}));
  } catch (const Error& e) {
    throw DomainError(std::string("invalid initial point: ") + e.what());
  }
  std::size_t growth_streak = 0;
  double prev_norm = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd g = st.curvatures - ctx.target;
    const double gnorm = g.cwiseAbs().maxCoeff();
    report.final_gradient_norm = gnorm;
    report.iterations = it;

    // Newton direction
    Eigen::VectorXd delta;
    Eigen::MatrixXd H = st.L;
    if (bg == Background::Euclidean) H.array() += 1.0 / static_cast<double>(n);  // pins the kernel (1,...,1)
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
      H.diagonal().array() += 1e-12 * (1.0 + H.cwiseAbs().maxCoeff());
      ldlt.compute(H);
      report.regularized = true;
      if (ldlt.info() != Eigen::Success) {
        report.status = SolveStatus::Diverged;
        report.message = "singular Newton system beyond regularization";
        return report;
      }
    }
    delta = ldlt.solve(-g);
    if (bg == Background::Euclidean) delta.array() -= delta.mean();
    if (!delta.allFinite()) {
      report.status = SolveStatus::Diverged;
      report.message = "non-finite Newton step";
      return report;
    }
    // A small gradient with a large Newton step means a flat direction toward
    // the boundary (curvature tending to its target at infinity), not a packing.
    if (gnorm <= opt.tol && delta.cwiseAbs().maxCoeff() <= opt.step_tol) {
      report.status = SolveStatus::Found;
      report.solution = UCoordinates{u, bg};
      return report;
    }

    if (it >= opt.max_iter) {
      report.status = SolveStatus::MaxIterations;
      report.message = "iteration limit reached";
      return report;
    }
    growth_streak = gnorm > prev_norm ? growth_streak + 1 : 0;
    prev_norm = gnorm;
    if (growth_streak >= opt.divergence_window) {
      report.status = SolveStatus::Diverged;
      report.message = "gradient norm grew across consecutive iterations";
      return report;
    }

    // Domain guard and Armijo backtracking on F
    double alpha = 1.0;
    if (bg == Background::Hyperbolic) {
      while ((u + alpha * delta).maxCoeff() >= -opt.domain_margin && alpha > 0.0) alpha *= 0.5;
    }
    const double slope = g.dot(delta);
    bool accepted = false;
    GeometryState trial_state;
    Eigen::VectorXd trial;
    for (int h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
      trial = u + alpha * delta;
      try {
        trial_state = evaluate(ctx.mesh, from_u({trial, bg}));
        const double expected = alpha * slope;
        const double change = segment_integral(ctx, u, trial, 1e-4 * std::abs(expected) + 1e-300);
        if (change <= opt.armijo_c1 * expected) {
          accepted = true;
          break;
        }
        // Round-off floor: F differences are unresolvable, fall back to the gradient.
        if (gnorm < 1e-7 && (trial_state.curvatures - ctx.target).cwiseAbs().maxCoeff() < gnorm) {
          accepted = true;
          break;
        }
      } catch (const Error&) {
        // left the region where the geometry is valid; shrink
      }
    }
    if (!accepted) {
      report.status = SolveStatus::Diverged;
      report.message = "line search failed";
      return report;
    }
    report.step_history.push_back({gnorm, alpha * delta.norm()});
    u = trial;
    st = std::move(trial_state);
    if (escaped(u)) {
      report.status = SolveStatus::Diverged;
      report.message = "iterate escaped to infinity";
      report.iterations = it + 1;
      report.final_gradient_norm = (st.curvatures - ctx.target).cwiseAbs().maxCoeff();
      return report;
    }
  }
}

struct ExistenceVerdict {
  bool exists = false;
  bool numerical_evidence_only = true;  // a negative verdict is never a proof
  std::vector<SolveReport> evidence;
};

/// Runs Newton from every start; exists iff some run finds the packing.
inline ExistenceVerdict detect_existence(const PotentialContext& ctx, const std::vector<UCoordinates>& attempts,
                                         NewtonOptions opt = {}) {
  if (attempts.empty()) throw DomainError("at least one starting point required");
  ExistenceVerdict verdict;
  for (const auto& start : attempts) {
    verdict.evidence.push_back(newton_solve(ctx, start, opt));
    if (verdict.evidence.back().status == SolveStatus::Found) {
      verdict.exists = true;
      verdict.numerical_evidence_only = false;
      break;
    }
  }
  return verdict;
}

}  // namespace cpflow
