#pragma once
//
// Serialization of solver and flow results: trajectory CSV, JSON summaries.
//

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cpflow/dynamics.hpp"
#include "cpflow/geometry.hpp"
#include "cpflow/potential.hpp"

namespace cpflow::io {

using nlohmann::json;

inline std::string csv_header(std::size_t n) {
  std::ostringstream os;
  os << 't';
  for (std::size_t i = 0; i < n; ++i) os << ",u_" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",K_" << i;
  os << ",F,E,drift\n";
  return os.str();
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  os << std::setprecision(17);
  const std::size_t n = traj.samples.empty() ? 0 : static_cast<std::size_t>(traj.samples.front().u.size());
  os << csv_header(n);
  for (const auto& s : traj.samples) {
    os << s.t;
    for (Eigen::Index i = 0; i < s.u.size(); ++i) os << ',' << s.u[i];
    for (Eigen::Index i = 0; i < s.K.size(); ++i) os << ',' << s.K[i];
    os << ',' << s.F << ',' << s.E << ',' << s.drift << '\n';
  }
  return os.str();
}

inline json trajectory_summary(const Trajectory& traj) {
  return json{{"exit", traj.exit ? to_string(*traj.exit) : "none"},
              {"steps_taken", traj.steps_taken},
              {"final_max_curvature_error", traj.final_max_curvature_error},
              {"wall_time_seconds", traj.wall_time_seconds}};
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline json solve_report_json(const SolveReport& r) {
  json j{{"status", to_string(r.status)},
         {"iterations", r.iterations},
         {"final_gradient_norm", r.final_gradient_norm},
         {"solution_radii", json::array()}};
  if (r.solution) j["solution_radii"] = to_std(from_u(*r.solution).radii);
  return j;
}

inline json triplets_json(const std::vector<Triplet>& ts) {
  json out = json::array();
  for (const auto& t : ts) out.push_back({t.row, t.col, t.value});
  return out;
}

/// Dumps JSON with doubles at 17 significant digits.
inline std::string dump(const json& j) {
  // nlohmann prints doubles with max_digits10 already; keep one entry point.
  return j.dump(2) + "\n";
}

/// FNV-1a 64-bit, for run manifests.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

}  // namespace cpflow::io
