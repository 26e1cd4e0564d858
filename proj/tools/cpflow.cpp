// cpflow: validate meshes, run flows, solve for constant-curvature packings.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cpflow/cpflow.hpp"
#include "cpflow/io.hpp"

#ifndef CPFLOW_VERSION
#define CPFLOW_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cpflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitHorizon = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitNotFound = 4;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
}

// Plain paths first, then $CPM_FIXTURES/<name> and $CPM_FIXTURES/<name>.cpmesh.
fs::path resolve_input(const std::string& arg, const char* ext) {
  if (fs::exists(arg)) return arg;
  if (const char* dir = std::getenv("CPM_FIXTURES")) {
    fs::path base(dir);
    if (fs::exists(base / arg)) return base / arg;
    if (fs::exists(base / (arg + ext))) return base / (arg + ext);
  }
  throw Error("cannot find " + arg);
}

struct LoadedMesh {
  WeightedMesh mesh;
  std::string hash;
};

LoadedMesh load_mesh(const std::string& arg) {
  const auto text = read_file(resolve_input(arg, ".cpmesh"));
  return {parse_mesh(text), io::hex64(io::fnv1a(text))};
}

Background parse_background(const std::string& s) {
  if (s == "euclidean") return Background::Euclidean;
  if (s == "hyperbolic") return Background::Hyperbolic;
  throw UsageError("unknown background '" + s + "'");
}

FlowKind parse_flow(const std::string& s) {
  for (auto k : {FlowKind::PCalabi, FlowKind::Ricci, FlowKind::RicciNormalized, FlowKind::PCalabiNormalized,
                 FlowKind::GraphPCalabi})
    if (s == to_string(k)) return k;
  throw UsageError("unknown flow '" + s + "'");
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::ExplicitEuler, Method::RK4, Method::AdaptiveRK45})
    if (s == to_string(m)) return m;
  throw UsageError("unknown method '" + s + "'");
}

Eigen::VectorXd random_radii(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  for (auto& x : r) x = dist(rng);
  return r;
}

Eigen::VectorXd load_radii(const std::string& arg, std::size_t n) {
  auto r = parse_radii(read_file(resolve_input(arg, ".radii")), n);
  return Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

json manifest(const std::string& command_line, const std::string& mesh_hash, json params, json integrator,
              std::uint64_t seed) {
  return json{{"command_line", command_line}, {"mesh_hash", mesh_hash},  {"parameters", std::move(params)},
              {"integrator", std::move(integrator)}, {"seed", seed}, {"version", CPFLOW_VERSION}};
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  std::string mesh;
  bool euclidean = false;
  std::size_t cap = kDefaultSubsetCap;
};

int cmd_validate(const ValidateArgs& a) {
  const auto lm = load_mesh(a.mesh);
  const auto& t = lm.mesh.topology();
  std::cout << "N=" << t.vertex_count() << " E=" << t.edge_count() << " F=" << t.face_count()
            << " chi=" << euler_characteristic(t) << " ok\n";
  const auto& w = lm.mesh.weights();
  std::cout << "weights=[" << detail::format_double(*std::min_element(w.begin(), w.end())) << ", "
            << detail::format_double(*std::max_element(w.begin(), w.end())) << "]\n";
  std::cout << "manifold=closed\n";
  if (a.euclidean) {
    if (t.vertex_count() > a.cap) {
      std::cout << "euclidean-condition=skipped (N > " << a.cap << ")\n";
    } else {
      const auto rep = check_euclidean_condition(lm.mesh, a.cap);
      std::cout << "euclidean-condition=" << (rep.holds ? "holds" : "fails");
      if (rep.witness) {
        std::cout << " witness={";
        for (std::size_t i = 0; i < rep.witness->size(); ++i) std::cout << (i ? "," : "") << (*rep.witness)[i];
        std::cout << '}';
      }
      std::cout << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// flow

struct FlowArgs {
  std::string mesh, radii, out;
  std::string flow = "p-calabi", background = "euclidean", method = "rk45";
  double p = 2.0, dt = 1e-3, t_max = 100.0, tol = 1e-9, abs_tol = 1e-8, rel_tol = 1e-8;
  std::size_t sample_every = 1;
  std::uint64_t seed = 0;
  bool no_normalize = false, no_potential = false;
};

struct FlowRun {
  Trajectory traj;
  json manifest;
};

FlowRun run_flow(const FlowArgs& a, const LoadedMesh& lm, const std::string& command_line) {
  if (!(a.p > 1.0)) throw UsageError("--p must exceed 1");
  FlowSpec spec;
  spec.kind = parse_flow(a.flow);
  spec.p = a.p;
  spec.background = parse_background(a.background);

  IntegratorConfig cfg;
  cfg.method = parse_method(a.method);
  cfg.dt = a.dt;
  cfg.t_max = a.t_max;
  cfg.abs_tol = a.abs_tol;
  cfg.rel_tol = a.rel_tol;
  cfg.stop_curvature_tol = a.tol;
  cfg.sample_every = a.sample_every;
  cfg.track_potential = !a.no_potential;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const auto n = lm.mesh.vertex_count();
  Eigen::VectorXd r = a.radii.empty() ? random_radii(n, a.seed) : load_radii(a.radii, n);
  const bool normalize = spec.background == Background::Euclidean && !a.no_normalize &&
                         (spec.kind == FlowKind::PCalabi || spec.kind == FlowKind::PCalabiNormalized ||
                          spec.kind == FlowKind::GraphPCalabi);
  UCoordinates u0 = to_u({r, spec.background});
  if (normalize) u0.u.array() -= u0.u.mean();
  if (spec.kind == FlowKind::GraphPCalabi) spec.fixed_weights = evaluate(lm.mesh, from_u(u0)).B;
  try {
    spec.validate(lm.mesh.topology());
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  json params{{"flow", a.flow}, {"p", a.p}, {"background", a.background}, {"normalize", normalize},
              {"radii", a.radii.empty() ? json(nullptr) : json(a.radii)}};
  json integ{{"method", a.method},   {"dt", a.dt},           {"t_max", a.t_max},
             {"abs_tol", a.abs_tol}, {"rel_tol", a.rel_tol}, {"stop_curvature_tol", a.tol},
             {"sample_every", a.sample_every}};
  FlowRun run{integrate(lm.mesh, u0, spec, cfg), manifest(command_line, lm.hash, params, integ, a.seed)};
  return run;
}

int exit_code(const Trajectory& t) {
  if (!t.exit) return kExitBlowUp;
  switch (*t.exit) {
    case ExitReason::Converged: return kExitOk;
    case ExitReason::HorizonReached: return kExitHorizon;
    default: return kExitBlowUp;
  }
}

void write_run(const FlowRun& run, const fs::path& prefix) {
  write_file(prefix.string() + ".csv", io::trajectory_csv(run.traj));
  write_file(prefix.string() + ".json", io::dump(io::trajectory_summary(run.traj)));
  write_file(prefix.string() + ".manifest.json", io::dump(run.manifest));
}

int cmd_flow(const FlowArgs& a, const std::string& command_line) {
  const auto lm = load_mesh(a.mesh);
  const auto run = run_flow(a, lm, command_line);
  if (!a.out.empty()) write_run(run, a.out);
  auto summary = io::trajectory_summary(run.traj);
  if (!run.traj.message.empty()) summary["message"] = run.traj.message;
  std::cout << io::dump(summary);
  return exit_code(run.traj);
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  std::string mesh, background = "euclidean", init = "ones", out;
  double tol = 1e-10;
  std::size_t max_iter = 200;
  std::uint64_t seed = 0;
};

int cmd_solve(const SolveArgs& a, const std::string& command_line) {
  const auto lm = load_mesh(a.mesh);
  const auto bg = parse_background(a.background);
  const auto n = lm.mesh.vertex_count();
  Eigen::VectorXd r;
  if (a.init == "ones") r = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  else if (a.init == "random") r = random_radii(n, a.seed);
  else r = load_radii(a.init, n);
  UCoordinates u0 = to_u({r, bg});
  if (bg == Background::Euclidean) u0.u.array() -= u0.u.mean();

  NewtonOptions opt;
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  const auto ctx = make_potential_context(lm.mesh, bg);
  const auto report = newton_solve(ctx, u0, opt);
  auto j = io::solve_report_json(report);
  if (!a.out.empty()) {
    write_file(a.out, io::dump(j));
    write_file(a.out + ".manifest.json",
               io::dump(manifest(command_line, lm.hash,
                                 {{"background", a.background}, {"tol", a.tol}, {"init", a.init},
                                  {"max_iter", a.max_iter}},
                                 nullptr, a.seed)));
  }
  if (!report.message.empty()) j["message"] = report.message;
  std::cout << io::dump(j);
  return report.status == SolveStatus::Found ? kExitOk : kExitNotFound;
}

// ---------------------------------------------------------------------------
// energy

struct EnergyArgs {
  std::string mesh, radii, background = "euclidean";
  double p = 2.0;
  bool matrices = false;
};

int cmd_energy(const EnergyArgs& a) {
  if (!(a.p > 1.0)) throw UsageError("--p must exceed 1");
  const auto lm = load_mesh(a.mesh);
  const auto bg = parse_background(a.background);
  const auto& t = lm.mesh.topology();
  const Eigen::VectorXd r = load_radii(a.radii, lm.mesh.vertex_count());
  const auto st = evaluate(lm.mesh, {r, bg});
  const double k_av = average_curvature(t);
  const double gb = st.curvatures.sum() -
                    (2.0 * std::numbers::pi * static_cast<double>(euler_characteristic(t)) - lambda(bg) * st.total_area);
  json j{{"K", io::to_std(st.curvatures)},
         {"k_av", k_av},
         {"E_p", energy_p_calabi(st.curvatures, bg == Background::Euclidean ? k_av : 0.0, a.p)},
         {"dirichlet_E", energy_dirichlet(t, st.curvatures, st.B, a.p)},
         {"gauss_bonnet_residual", gb}};
  if (a.matrices) {
    j["B"] = io::triplets_json(B_triplets(t, st.B));
    j["L"] = io::triplets_json(to_triplets(st.L));
  }
  std::cout << io::dump(j);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  FlowArgs base;
  std::vector<double> ps{2.0};
  std::vector<std::uint64_t> seeds{0};
  unsigned jobs = 1;
};

int cmd_sweep(const SweepArgs& a, const std::string& command_line) {
  if (a.base.out.empty()) throw UsageError("sweep needs --out DIR");
  for (double p : a.ps)
    if (!(p > 1.0)) throw UsageError("--p must exceed 1");
  const auto lm = load_mesh(a.base.mesh);
  struct Job {
    double p;
    std::uint64_t seed;
    int code = kExitBlowUp;
    std::string name, exit;
  };
  std::vector<Job> jobs;
  for (double p : a.ps)
    for (auto s : a.seeds) {
      std::ostringstream name;
      name << "run_p" << p << "_s" << s;
      jobs.push_back({p, s, kExitBlowUp, name.str(), {}});
    }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      auto& job = jobs[i];
      FlowArgs fa = a.base;
      fa.p = job.p;
      fa.seed = job.seed;
      try {
        const auto run = run_flow(fa, lm, command_line);
        write_run(run, fs::path(a.base.out) / job.name);
        job.code = exit_code(run.traj);
        job.exit = run.traj.exit ? to_string(*run.traj.exit) : "none";
      } catch (const std::exception& e) {
        job.exit = std::string("error: ") + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned k = std::max(1u, std::min<unsigned>(a.jobs, static_cast<unsigned>(jobs.size())));
  for (unsigned i = 1; i < k; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  int worst = kExitOk;
  for (const auto& job : jobs) {
    std::cout << job.name << ' ' << job.exit << '\n';
    worst = std::max(worst, job.code);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// fixture

int cmd_fixture(const std::string& name, const std::string& out, bool list) {
  const auto all = fixtures::bundled();
  if (list) {
    for (const auto& f : all) std::cout << f.name << '\n';
    return kExitOk;
  }
  for (const auto& f : all) {
    if (f.name != name) continue;
    const auto text = serialize_mesh(WeightedMesh(f.topology, f.phi));
    if (out.empty()) std::cout << text;
    else write_file(out, text);
    return kExitOk;
  }
  throw UsageError("unknown fixture '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Combinatorial p-th Calabi flows for circle packings"};
  app.set_version_flag("--version", CPFLOW_VERSION);
  app.require_subcommand(1);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check a mesh file");
  validate->add_option("mesh", va.mesh, "Mesh file")->required();
  validate->add_flag("--euclidean", va.euclidean, "Also check the Euclidean existence condition");
  validate->add_option("--cap", va.cap, "Largest N for subset enumeration")->capture_default_str();

  auto add_flow_options = [](CLI::App* sub, FlowArgs& fa) {
    sub->add_option("mesh", fa.mesh, "Mesh file")->required();
    sub->add_option("--flow", fa.flow, "p-calabi | ricci | ricci-normalized | p-calabi-normalized | graph-p-calabi")
        ->capture_default_str();
    sub->add_option("--background", fa.background, "euclidean | hyperbolic")->capture_default_str();
    sub->add_option("--method", fa.method, "euler | rk4 | rk45")->capture_default_str();
    sub->add_option("--dt", fa.dt, "Initial or fixed step")->capture_default_str();
    sub->add_option("--t-max", fa.t_max, "Time horizon")->capture_default_str();
    sub->add_option("--tol", fa.tol, "Stop when max |K - target| is below this")->capture_default_str();
    sub->add_option("--abs-tol", fa.abs_tol, "rk45 absolute tolerance")->capture_default_str();
    sub->add_option("--rel-tol", fa.rel_tol, "rk45 relative tolerance")->capture_default_str();
    sub->add_option("--sample-every", fa.sample_every, "Record every k-th accepted step")->capture_default_str();
    sub->add_option("--seed", fa.seed, "Seed for random initial radii")->capture_default_str();
    sub->add_flag("--no-normalize", fa.no_normalize, "Keep the initial scale in Euclidean p-Calabi flows");
    sub->add_flag("--no-potential", fa.no_potential, "Skip the F column");
  };

  FlowArgs fa;
  auto* flow = app.add_subcommand("flow", "Integrate a curvature flow");
  add_flow_options(flow, fa);
  flow->add_option("radii", fa.radii, "Radii file (random seeded radii in [0.5, 2] if omitted)");
  flow->add_option("--p", fa.p, "Exponent p > 1")->capture_default_str();
  flow->add_option("--out", fa.out, "Output prefix for .csv, .json and .manifest.json");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Newton solve for the constant curvature packing");
  solve->add_option("mesh", sa.mesh, "Mesh file")->required();
  solve->add_option("--background", sa.background, "euclidean | hyperbolic")->capture_default_str();
  solve->add_option("--tol", sa.tol, "Curvature tolerance")->capture_default_str();
  solve->add_option("--init", sa.init, "ones | random | radii file")->capture_default_str();
  solve->add_option("--seed", sa.seed, "Seed for --init random")->capture_default_str();
  solve->add_option("--max-iter", sa.max_iter)->capture_default_str();
  solve->add_option("--out", sa.out, "Write the report here as well");

  EnergyArgs ea;
  auto* energy = app.add_subcommand("energy", "Curvatures and energies of one metric");
  energy->add_option("mesh", ea.mesh, "Mesh file")->required();
  energy->add_option("radii", ea.radii, "Radii file")->required();
  energy->add_option("--background", ea.background, "euclidean | hyperbolic")->capture_default_str();
  energy->add_option("--p", ea.p, "Exponent p > 1")->capture_default_str();
  energy->add_flag("--matrices", ea.matrices, "Include B and L as (row, col, value) triplets");

  SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "Run a flow over several p values and seeds");
  add_flow_options(sweep, wa.base);
  sweep->add_option("--p", wa.ps, "Exponents")->delimiter(',');
  sweep->add_option("--seeds", wa.seeds, "Seeds for random initial radii")->delimiter(',');
  sweep->add_option("--jobs", wa.jobs, "Parallel runs")->capture_default_str();
  sweep->add_option("--out", wa.base.out, "Output directory")->required();

  std::string fixture_name, fixture_out;
  bool fixture_list = false;
  auto* fixture = app.add_subcommand("fixture", "Write a bundled fixture mesh");
  fixture->add_option("name", fixture_name, "Fixture name");
  fixture->add_option("--out", fixture_out, "Output file (stdout if omitted)");
  fixture->add_flag("--list", fixture_list, "List fixture names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(va);
    if (*flow) return cmd_flow(fa, command_line);
    if (*solve) return cmd_solve(sa, command_line);
    if (*energy) return cmd_energy(ea);
    if (*sweep) return cmd_sweep(wa, command_line);
    if (*fixture) {
      if (!fixture_list && fixture_name.empty()) throw UsageError("fixture name required");
      return cmd_fixture(fixture_name, fixture_out, fixture_list);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitUsage;
}
