// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpflow/cpflow.hpp"
#include "oracles.hpp"

using namespace cpflow;

namespace {

constexpr auto kE = Background::Euclidean;
constexpr auto kH = Background::Hyperbolic;
const double kSqrt3 = std::sqrt(3.0);

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  // records the first failure only, keeps the line short
  void require(bool ok, const std::string& what) {
    if (!ok && pass) note << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

// Every trajectory integrated here, for the bound monitors.
struct RecordedRun {
  const WeightedMesh* mesh;
  FlowSpec spec;
  Trajectory tr;
};
std::vector<RecordedRun> g_runs;

const WeightedMesh& tetrahedron() {
  static const WeightedMesh m(fixtures::tetrahedron());
  return m;
}
const WeightedMesh& octahedron() {
  static const WeightedMesh m(fixtures::octahedron());
  return m;
}
const WeightedMesh& icosahedron() {
  static const WeightedMesh m(fixtures::icosahedron());
  return m;
}
const WeightedMesh& genus2() {
  static const WeightedMesh m(fixtures::genus2());
  return m;
}

const Trajectory& run(const WeightedMesh& m, const UCoordinates& u0, const FlowSpec& spec, const IntegratorConfig& cfg) {
  g_runs.push_back({&m, spec, integrate(m, u0, spec, cfg)});
  return g_runs.back().tr;
}

// r(0) = (1.2, 0.9, 1.0, 0.95) rescaled to product 1.
UCoordinates perturbed_tetrahedron() {
  Eigen::VectorXd r(4);
  r << 1.2, 0.9, 1.0, 0.95;
  auto u = to_u({r, kE});
  u.u.array() -= u.u.mean();
  return u;
}

double half_ordered_pair_sum(const Triangulation& t, const std::vector<double>& w, const Eigen::VectorXd& f, double p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < t.vertex_count(); ++i)
    for (std::size_t e = 0; e < t.edge_count(); ++e) {
      const auto& v = t.edge(e).vertices;
      if (v[0] == v[1] || (v[0] != i && v[1] != i)) continue;
      const auto j = v[0] == i ? v[1] : v[0];
      sum += w[e] * std::pow(std::abs(f[static_cast<Eigen::Index>(j)] - f[static_cast<Eigen::Index>(i)]), p);
    }
  return -0.5 * sum;
}

bool non_increasing(const Trajectory& tr, const IntegratorConfig& cfg, bool use_f, double& worst) {
  bool ok = true;
  for (std::size_t k = 1; k < tr.samples.size(); ++k) {
    const auto &a = tr.samples[k - 1], &b = tr.samples[k];
    const double va = use_f ? a.F : a.E, vb = use_f ? b.F : b.E;
    const double excess = vb - va - 10 * (cfg.abs_tol + cfg.rel_tol * std::abs(va));
    worst = std::max(worst, vb - va);
    ok = ok && excess <= 0.0;
  }
  return ok;
}

// ---------------------------------------------------------------------------

void identities(Outcome& o) {
  std::mt19937_64 rng(1001);
  const std::vector<const WeightedMesh*> meshes{&tetrahedron(), &octahedron(), &icosahedron(), &genus2()};
  const double ps[] = {1.5, 2.0, 3.0, 4.0};
  double worst_sum = 0, worst_parts = 0;
  for (int s = 0; s < 1000; ++s) {
    const auto& m = *meshes[static_cast<std::size_t>(s) % meshes.size()];
    const auto bg = (s / 4) % 2 ? kH : kE;
    const auto B = evaluate(m, oracle::random_metric(m, bg, rng)).B;
    const Eigen::VectorXd f = oracle::random_vector(m.vertex_count(), rng);
    const double p = ps[(s / 8) % 4];
    const auto d = p_laplacian(m.topology(), B, f, p);
    const double rel_sum = std::abs(d.sum()) / d.cwiseAbs().sum();
    const double rhs = half_ordered_pair_sum(m.topology(), B, f, p);
    const double rel_parts = std::abs(f.dot(d) - rhs) / std::abs(rhs);
    worst_sum = std::max(worst_sum, rel_sum);
    worst_parts = std::max(worst_parts, rel_parts);
  }
  o.require(worst_sum <= 1e-12, "sum of p-Laplacian");
  o.require(worst_parts <= 1e-12, "summation by parts");
  o.note << "1000 samples, worst rel " << worst_sum << " / " << worst_parts;
}

void operators(Outcome& o) {
  std::mt19937_64 rng(1002);
  double worst_sym = 0, worst_fd = 0, min_gap = INFINITY, min_A = INFINITY, min_eig_h = INFINITY, max_B = 0;
  for (const auto* m : {&tetrahedron(), &octahedron(), &icosahedron(), &genus2()}) {
    for (auto bg : {kE, kH}) {
      if (bg == kE && m == &genus2()) continue;  // Euclidean operators are checked on the spheres
      for (int s = 0; s < 25; ++s) {
        const auto metric = oracle::random_metric(*m, bg, rng);
        const auto st = evaluate(*m, metric);
        const auto& t = m->topology();
        // B from each side of every edge
        for (std::size_t e = 0; e < t.edge_count(); ++e) {
          const auto& v = t.edge(e).vertices;
          const auto i = static_cast<Eigen::Index>(v[0]), j = static_cast<Eigen::Index>(v[1]);
          if (i == j) continue;
          worst_sym = std::max(worst_sym, std::abs(st.L(i, j) - st.L(j, i)) / std::max(1e-300, std::abs(st.L(i, j))));
          o.require(st.B[e] > 0.0, "B positive");
          if (bg == kE) o.require(st.B[e] < 2 * kSqrt3, "Euclidean B below 2 sqrt 3");
          max_B = std::max(max_B, st.B[e]);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (st.L + st.L.transpose()));
        const auto& ev = eig.eigenvalues();
        const double scale = ev.cwiseAbs().maxCoeff();
        if (bg == kE) {
          o.require(ev[0] > -1e-12 * scale, "Euclidean L positive semidefinite");
          o.require(ev[1] > 1e-9 * scale, "Euclidean L kernel one-dimensional");
          min_gap = std::min(min_gap, ev[1] / scale);
        } else {
          o.require(st.A.minCoeff() > 0.0, "hyperbolic A positive");
          o.require(ev[0] > 0.0, "hyperbolic L positive definite");
          min_A = std::min(min_A, st.A.minCoeff());
          min_eig_h = std::min(min_eig_h, ev[0]);
        }
        const auto u = to_u(metric);
        const auto J = oracle::fd_jacobian(
            [&](const Eigen::VectorXd& x) { return curvatures(*m, from_u({x, bg})).curvatures; }, u.u);
        worst_fd = std::max(worst_fd, oracle::rel_err(st.L, J));
      }
    }
  }
  o.require(worst_sym <= 1e-9, "B symmetry");
  o.require(worst_fd <= 1e-5, "L vs finite differences");
  o.note << "sym " << worst_sym << ", FD rel " << worst_fd << ", max Euclidean B " << max_B << ", min lambda2/scale "
         << min_gap << ", min A " << min_A << ", min hyperbolic eig " << min_eig_h;
}

void p2_reduction(Outcome& o) {
  std::mt19937_64 rng(1003);
  double worst = 0;
  for (const auto* m : {&tetrahedron(), &octahedron(), &icosahedron(), &genus2()})
    for (auto bg : {kE, kH})
      for (int s = 0; s < 25; ++s) {
        const auto st = evaluate(*m, oracle::random_metric(*m, bg, rng));
        const Eigen::VectorXd lb = assemble_LB(m->topology(), st.B) * st.curvatures;
        const Eigen::VectorXd d2 = p_laplacian(m->topology(), st.B, st.curvatures, 2.0);
        worst = std::max(worst, (d2 + lb).cwiseAbs().maxCoeff() / std::max(1.0, lb.cwiseAbs().maxCoeff()));
      }
  o.require(worst <= 1e-12, "Delta_2 K + L_B K");
  o.note << "200 metrics, worst " << worst;
}

void conservation(Outcome& o) {
  IntegratorConfig cfg;
  cfg.method = Method::RK4;
  cfg.dt = 1e-3;
  cfg.t_max = 10.0;
  cfg.stop_curvature_tol = 1e-300;  // integrate the whole interval
  cfg.track_potential = false;
  double worst = 0;
  for (double p : {1.5, 2.5, 4.0}) {
    const auto& tr = run(tetrahedron(), perturbed_tetrahedron(), {FlowKind::PCalabi, p, kE, {}, {}}, cfg);
    o.require(tr.exit && *tr.exit == ExitReason::HorizonReached, "run reaches t = 10");
    o.require(tr.samples.back().t == 10.0, "final time");
    for (const auto& s : tr.samples) worst = std::max(worst, s.drift);
  }
  o.require(worst < 1e-9, "drift");
  o.note << "p in {1.5, 2.5, 4}, worst |sum u(t) - sum u(0)| " << worst;
}

void euclidean_convergence(Outcome& o) {
  IntegratorConfig cfg;
  cfg.t_max = 1e10;
  cfg.track_potential = false;
  const auto u0 = perturbed_tetrahedron();
  const auto ctx = make_potential_context(tetrahedron(), kE);
  const auto newton = newton_solve(ctx, u0);
  o.require(newton.status == SolveStatus::Found, "Newton solve");
  if (!newton.solution) return;
  const auto r_newton = from_u(*newton.solution).radii;
  for (double p : {1.5, 2.0, 3.0}) {
    const auto& tr = run(tetrahedron(), u0, {FlowKind::PCalabi, p, kE, {}, {}}, cfg);
    o.require(tr.exit && *tr.exit == ExitReason::Converged, "converged exit");
    const auto& last = tr.samples.back();
    const double k_err = (last.K.array() - oracle::kPi).abs().maxCoeff();
    const auto r = from_u({last.u, kE}).radii;
    const double r_err = (r.array() - 1.0).abs().maxCoeff();
    const double vs_newton = (r - r_newton).cwiseAbs().maxCoeff();
    o.require(k_err < 1e-8, "max |K - pi|");
    o.require(r_err < 1e-6, "max |r - 1|");
    o.require(vs_newton <= 1e-5, "agreement with Newton");
    o.note << "p=" << p << ": t=" << last.t << " steps=" << tr.steps_taken << " |K-pi|=" << k_err << " |r-1|=" << r_err
           << "; ";
  }
}

void hyperbolic_convergence(Outcome& o) {
  IntegratorConfig cfg;
  cfg.t_max = 1e6;
  std::mt19937_64 rng(2024);
  const auto u0 = to_u({oracle::random_radii(10, rng, 0.5, 2.0), kH});
  const auto ctx = make_potential_context(genus2(), kH);
  const auto newton = newton_solve(ctx, u0);
  o.require(newton.status == SolveStatus::Found, "Newton solve");
  if (!newton.solution) return;
  for (double p : {2.0, 3.0}) {
    const auto& tr = run(genus2(), u0, {FlowKind::PCalabi, p, kH, {}, {}}, cfg);
    o.require(tr.exit && *tr.exit == ExitReason::Converged, "converged exit");
    const auto& last = tr.samples.back();
    const double k_err = last.K.cwiseAbs().maxCoeff();
    const double vs_newton = (last.u - newton.solution->u).cwiseAbs().maxCoeff();
    double rise = -INFINITY;
    o.require(k_err < 1e-6, "max |K|");
    o.require(vs_newton <= 1e-5, "agreement with Newton in u");
    o.require(non_increasing(tr, cfg, true, rise), "potential non-increasing");
    o.note << "p=" << p << ": t=" << last.t << " steps=" << tr.steps_taken << " |K|=" << k_err
           << " |u-u_newton|=" << vs_newton << " max F rise " << rise << "; ";
  }
}

void monotonicity(Outcome& o) {
  IntegratorConfig cfg;
  cfg.t_max = 50;
  cfg.sample_every = 10;
  cfg.max_steps = 50'000;  // p < 2 hyperbolic runs stall short of the stop tolerance
  std::mt19937_64 rng(1007);
  int runs = 0;
  double rise_f = -INFINITY, rise_e = -INFINITY, rise_d = -INFINITY;
  auto check = [&](const Trajectory& tr, bool use_f, double& rise, const char* what) {
    o.require(tr.exit && (*tr.exit == ExitReason::Converged || *tr.exit == ExitReason::HorizonReached), "clean exit");
    o.require(tr.samples.size() > 2, "enough samples");
    o.require(non_increasing(tr, cfg, use_f, rise), what);
    ++runs;
  };
  const auto tet0 = perturbed_tetrahedron();
  const UCoordinates oct0{oracle::random_vector(6, rng, -0.4, 0.4), kE};
  const auto g0 = to_u({oracle::random_radii(10, rng, 0.5, 2.0), kH});
  for (double p : {1.5, 2.5, 4.0}) {
    check(run(tetrahedron(), tet0, {FlowKind::PCalabi, p, kE, {}, {}}, cfg), true, rise_f, "F along p-Calabi");
    check(run(octahedron(), oct0, {FlowKind::PCalabi, p, kE, {}, {}}, cfg), true, rise_f, "F along p-Calabi");
    check(run(genus2(), g0, {FlowKind::PCalabi, p, kH, {}, {}}, cfg), true, rise_f, "F along hyperbolic p-Calabi");
    check(run(tetrahedron(), tet0, {FlowKind::PCalabiNormalized, p, kE, {}, {}}, cfg), false, rise_e,
          "E_p along normalized flow");
    check(run(octahedron(), oct0, {FlowKind::PCalabiNormalized, p, kE, {}, {}}, cfg), false, rise_e,
          "E_p along normalized flow");
    for (const auto* m : {&tetrahedron(), &octahedron()}) {
      const auto& u0 = m == &tetrahedron() ? tet0 : oct0;
      const auto B0 = evaluate(*m, from_u(u0)).B;
      check(run(*m, u0, {FlowKind::GraphPCalabi, p, kE, B0, {}}, cfg), false, rise_d, "Dirichlet energy along graph flow");
    }
  }
  o.note << runs << " runs, largest sample-to-sample rise: F " << rise_f << ", E_p " << rise_e << ", Dirichlet "
         << rise_d;
}

void potential_properties(Outcome& o) {
  std::mt19937_64 rng(1008);
  double path = 0, trans = 0, convex = -INFINITY, grad = 0;
  auto point = [&](std::size_t n, Background bg) -> Eigen::VectorXd {
    if (bg == kE) return oracle::random_vector(n, rng, -0.6, 0.6);
    return to_u({oracle::random_radii(n, rng, 0.3, 2.5), kH}).u;
  };
  for (const auto* m : {&tetrahedron(), &octahedron(), &icosahedron(), &genus2()}) {
    const auto n = m->vertex_count();
    for (auto bg : {kE, kH}) {
      const auto ctx = make_potential_context(*m, bg, UCoordinates{point(n, bg), bg});
      for (int s = 0; s < 4; ++s) {
        const Eigen::VectorXd u = point(n, bg), v = point(n, bg);
        Eigen::VectorXd w = ctx.base_point.u;
        const auto half = static_cast<Eigen::Index>(n / 2);
        w.head(half) = u.head(half);
        const double fu = potential_value(ctx, u), fv = potential_value(ctx, v);
        path = std::max(path, std::abs(fu - potential_value_along(ctx, {w}, u)));
        if (bg == kE) trans = std::max(trans, std::abs(fu - potential_value(ctx, (u.array() + 0.37 * (s + 1)).matrix())));
        for (double lam : {0.25, 0.5, 0.75})
          convex = std::max(convex, potential_value(ctx, lam * u + (1 - lam) * v) - (lam * fu + (1 - lam) * fv));
        const auto g = potential_gradient(ctx, u);
        const double h = 1e-4;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
          Eigen::VectorXd up = u, um = u;
          up[i] += h;
          um[i] -= h;
          const double fd = (segment_integral(ctx, u, up) - segment_integral(ctx, u, um)) / (2 * h);
          grad = std::max(grad, std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-2));
        }
      }
    }
  }
  o.require(path <= 1e-8, "path independence");
  o.require(trans <= 1e-8, "translation invariance");
  o.require(convex <= 1e-8, "segment convexity");
  o.require(grad <= 1e-5, "gradient vs finite differences");
  o.note << "path " << path << ", translation " << trans << ", convexity excess " << convex << ", gradient rel " << grad;
}

void existence_cross_check(Outcome& o) {
  std::mt19937_64 rng(1009);
  int compared = 0;
  for (const auto& fx : fixtures::bundled()) {
    const WeightedMesh m(fx.topology, fx.phi);
    const auto n = m.vertex_count();
    if (n > 12) continue;
    const auto cond = check_euclidean_condition(m);
    std::vector<UCoordinates> starts{{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), kE}};
    for (int s = 0; s < 3; ++s) starts.push_back({oracle::random_vector(n, rng, -0.5, 0.5), kE});
    const auto verdict = detect_existence(make_potential_context(m, kE), starts);
    o.require(cond.holds == verdict.exists, std::string("verdicts differ on ") + fx.name);
    o.note << fx.name << " " << (cond.holds ? "holds" : "fails") << "/" << (verdict.exists ? "found" : "none") << "; ";
    ++compared;
  }
  o.require(compared >= 5, "enough fixtures");
}

void bound_monitors(Outcome& o) {
  std::size_t hyp_samples = 0, euc_samples = 0;
  double max_k = -INFINITY, worst_ratio = 0;
  for (const auto& rr : g_runs) {
    const auto& t = rr.mesh->topology();
    if (rr.spec.background == kH) {
      for (const auto& s : rr.tr.samples) {
        max_k = std::max(max_k, s.K.maxCoeff());
        o.require(s.K.maxCoeff() < 2 * oracle::kPi, "hyperbolic K below 2 pi");
        ++hyp_samples;
      }
      continue;
    }
    const double d = static_cast<double>(t.max_degree());
    const double p = rr.spec.p;
    for (const auto& s : rr.tr.samples) {
      const auto B = evaluate(*rr.mesh, from_u({s.u, kE})).B;
      const auto lap = p_laplacian(t, B, s.K, p);
      for (std::size_t i = 0; i < t.vertex_count(); ++i) {
        const double bound = 2 * kSqrt3 * static_cast<double>(t.degree(i)) * std::pow(d * oracle::kPi, p - 1);
        const double ratio = std::abs(lap[static_cast<Eigen::Index>(i)]) / bound;
        worst_ratio = std::max(worst_ratio, ratio);
        o.require(ratio <= 1.0, "Euclidean p-Laplacian bound");
      }
      ++euc_samples;
    }
  }
  o.require(hyp_samples > 0 && euc_samples > 0, "runs recorded");
  o.note << hyp_samples << " hyperbolic samples, max K " << max_k << "; " << euc_samples
         << " Euclidean samples, worst |Delta_p K| / bound " << worst_ratio;
}

void large_radius_estimate(Outcome& o) {
  const auto& m = genus2();
  const auto st = evaluate(m, {Eigen::VectorXd::Constant(10, 20.0), kH});
  Eigen::VectorXd bsum = Eigen::VectorXd::Zero(10);
  for (std::size_t e = 0; e < m.topology().edge_count(); ++e) {
    const auto& v = m.topology().edge(e).vertices;
    if (v[0] == v[1]) continue;
    bsum[static_cast<Eigen::Index>(v[0])] += st.B[e];
    bsum[static_cast<Eigen::Index>(v[1])] += st.B[e];
  }
  for (Eigen::Index i = 0; i < 10; ++i) o.require(st.A[i] >= bsum[i], "A_i >= sum B_ij");
  o.note << "min A " << st.A.minCoeff() << ", max sum B " << bsum.maxCoeff();
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<void(Outcome&)> body;
  };
  const std::vector<Criterion> criteria{
      {1, "identity suite", 1, identities},
      {2, "operator suite", 10, operators},
      {3, "p=2 reduction", 1, p2_reduction},
      {4, "conservation", 30, conservation},
      {5, "Euclidean convergence", 60, euclidean_convergence},
      {6, "hyperbolic convergence", 120, hyperbolic_convergence},
      {7, "energy monotonicity", 60, monotonicity},
      {8, "potential properties", 30, potential_properties},
      {9, "existence cross-check", 60, existence_cross_check},
      {10, "bound monitors", 30, bound_monitors},
      {11, "large-radius estimate", 10, large_radius_estimate},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs <= c.budget_seconds, "time budget");
    failures += !o.pass;
    std::printf("criterion %d: %s %s [%.2fs / %.0fs] %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs,
                c.budget_seconds, o.note.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
