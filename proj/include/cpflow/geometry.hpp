#pragma once
//
// Metric quantities of a circle packing on a weighted mesh.
//
// Radii r live on vertices; with weight phi on edge ij the edge length is
//   Euclidean:  l^2 = r_i^2 + r_j^2 + 2 r_i r_j cos(phi)
//   hyperbolic: cosh l = cosh r_i cosh r_j + sinh r_i sinh r_j cos(phi)
// Curvature K_i = 2 pi - (sum of corner angles at i). Working coordinates are
// u = ln r (Euclidean) and u = ln tanh(r/2) (hyperbolic); L = dK/du.
//

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "cpflow/error.hpp"
#include "cpflow/mesh.hpp"

namespace cpflow {

enum class Background { Euclidean, Hyperbolic };

/// Curvature sign of the background plane as it enters Gauss-Bonnet.
inline constexpr double lambda(Background bg) { return bg == Background::Euclidean ? 0.0 : -1.0; }

inline const char* to_string(Background bg) { return bg == Background::Euclidean ? "euclidean" : "hyperbolic"; }

/// Hyperbolic radii above this are treated as a diverging flow.
inline constexpr double kRadiusCap = 350.0;
inline constexpr double kMinAngle = 1e-12;
inline constexpr double kMinDenominator = 1e-300;

struct PackingMetric {
  Eigen::VectorXd radii;
  Background background = Background::Euclidean;
};

struct UCoordinates {
  Eigen::VectorXd u;
  Background background = Background::Euclidean;
};

namespace detail {

/// log(sinh x) for x > 0 without overflow.
inline double log_sinh(double x) {
  if (x > 20.0) return x - std::numbers::ln2 + std::log1p(-std::exp(-2.0 * x));
  return std::log(std::sinh(x));
}

inline void check_radius(double r, Background bg) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("radius must be positive and finite, got " + std::to_string(r));
  if (bg == Background::Hyperbolic && r > kRadiusCap)
    throw OverflowError("hyperbolic radius " + std::to_string(r) + " exceeds cap; radius blow-up, flow diverging");
}

/// dr/du: r (Euclidean) or sinh r (hyperbolic).
inline double radius_scale(double r, Background bg) { return bg == Background::Euclidean ? r : std::sinh(r); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-triangle formulas

inline double edge_length(double ri, double rj, double phi, Background bg) {
  detail::check_radius(ri, bg);
  detail::check_radius(rj, bg);
  if (!(phi >= 0.0 && phi <= kMaxWeight)) throw DomainError("weight out of range [0, pi/2]");
  if (phi == 0.0) return ri + rj;  // tangent circles, both backgrounds
  const double c = std::cos(phi);
  if (bg == Background::Euclidean) return std::sqrt(ri * ri + rj * rj + 2.0 * ri * rj * c);
  // cosh l - 1 as a sum of non-negative terms, then acosh(1 + y) = log1p(y + sqrt(y (y + 2)))
  const double ci = 2.0 * std::pow(std::sinh(0.5 * ri), 2);
  const double cj = 2.0 * std::pow(std::sinh(0.5 * rj), 2);
  const double y = ci * cj + ci + cj + std::sinh(ri) * std::sinh(rj) * c;
  if (!std::isfinite(y)) throw OverflowError("hyperbolic edge length overflow");
  return std::log1p(y + std::sqrt(y * (y + 2.0)));
}

/// d l / d r_i for the edge formula above.
inline double edge_length_derivative(double ri, double rj, double phi, double length, Background bg) {
  if (phi == 0.0) return 1.0;
  const double c = std::cos(phi);
  if (bg == Background::Euclidean) return (ri + rj * c) / length;
  return (std::sinh(ri) * std::cosh(rj) + std::cosh(ri) * std::sinh(rj) * c) / std::sinh(length);
}

/// Corner angles (A, B, C) opposite sides (a, b, c), by the half-angle form of
/// the background cosine law.
inline std::array<double, 3> corner_angles(double a, double b, double c, Background bg) {
  if (!(a > 0.0 && b > 0.0 && c > 0.0)) throw DegenerateError("non-positive side length");
  const std::array<double, 3> side = {a, b, c};
  // excess[k] = s - side[k] > 0 is the strict triangle inequality
  const double s = 0.5 * (a + b + c);
  std::array<double, 3> excess{};
  for (int k = 0; k < 3; ++k) {
    excess[k] = 0.5 * (side[(k + 1) % 3] + side[(k + 2) % 3] - side[k]);
    if (!(excess[k] > 0.0)) throw DegenerateError("triangle inequality violated");
  }
  std::array<double, 3> angle{};
  for (int k = 0; k < 3; ++k) {
    const double e1 = excess[(k + 1) % 3], e2 = excess[(k + 2) % 3];
    double t;
    if (bg == Background::Euclidean) {
      t = std::sqrt((e1 * e2) / (s * excess[k]));
    } else {
      using detail::log_sinh;
      t = std::exp(0.5 * (log_sinh(e1) + log_sinh(e2) - log_sinh(s) - log_sinh(excess[k])));
    }
    angle[k] = 2.0 * std::atan(t);
    if (!(angle[k] >= kMinAngle)) throw DegenerateError("corner angle below tolerance");
  }
  return angle;
}

/// Hyperbolic: angle deficit. Euclidean: Heron's formula (reporting only).
inline double face_area(const std::array<double, 3>& angles, const std::array<double, 3>& lengths, Background bg) {
  if (bg == Background::Hyperbolic) {
    const double deficit = std::numbers::pi - (angles[0] + angles[1] + angles[2]);
    if (deficit < -1e-12) throw DegenerateError("negative hyperbolic angle deficit; inconsistent angles");
    return std::max(deficit, 0.0);
  }
  auto l = lengths;
  std::sort(l.begin(), l.end(), std::greater<>());
  const double a = l[0], b = l[1], c = l[2];
  const double q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
  return 0.25 * std::sqrt(std::max(q, 0.0));
}

// ---------------------------------------------------------------------------
// Coordinates

inline UCoordinates to_u(const PackingMetric& metric) {
  UCoordinates out{Eigen::VectorXd(metric.radii.size()), metric.background};
  for (Eigen::Index i = 0; i < metric.radii.size(); ++i) {
    const double r = metric.radii[i];
    detail::check_radius(r, metric.background);
    // ln tanh(r/2) = log1p(-2 / (1 + e^r)), exact in relative terms for large r
    out.u[i] = metric.background == Background::Euclidean ? std::log(r) : std::log1p(-2.0 / (1.0 + std::exp(r)));
  }
  return out;
}

inline PackingMetric from_u(const UCoordinates& coords) {
  PackingMetric out{Eigen::VectorXd(coords.u.size()), coords.background};
  for (Eigen::Index i = 0; i < coords.u.size(); ++i) {
    const double u = coords.u[i];
    if (!std::isfinite(u)) throw DomainError("non-finite u coordinate");
    if (coords.background == Background::Euclidean) {
      out.radii[i] = std::exp(u);
    } else {
      if (!(u < 0.0)) throw DomainError("hyperbolic u coordinate must be negative");
      // r = 2 artanh(e^u) = log(1 + e^u) - log(1 - e^u)
      out.radii[i] = std::log1p(std::exp(u)) - std::log(-std::expm1(u));
    }
    detail::check_radius(out.radii[i], coords.background);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole-mesh state

/// Geometry of one face: side lengths (side s opposite corner s), corner
/// angles, area and optionally D[c][x] = d theta_c / d r_{corner x}.
struct FaceGeometry {
  std::array<double, 3> lengths{};
  std::array<double, 3> angles{};
  double area = 0.0;
  std::array<std::array<double, 3>, 3> radius_derivatives{};
};

struct GeometryState {
  Background background = Background::Euclidean;
  Eigen::VectorXd radii;
  std::vector<double> lengths;  // per edge
  std::vector<FaceGeometry> faces;
  Eigen::VectorXd curvatures;
  double k_av = 0.0;
  double total_area = 0.0;
  bool has_derivatives = false;
  std::vector<double> B;  // per edge
  Eigen::VectorXd A;      // per vertex; zero in Euclidean background
  Eigen::MatrixXd L;      // dK/du

  const std::array<double, 3>& corner_angles(std::size_t f) const { return faces[f].angles; }
  double face_area(std::size_t f) const { return faces[f].area; }
};

inline double average_curvature(const Triangulation& t) {
  return 2.0 * std::numbers::pi * static_cast<double>(euler_characteristic(t)) / static_cast<double>(t.vertex_count());
}

namespace detail {

inline void check_metric(const WeightedMesh& m, const PackingMetric& metric) {
  if (static_cast<std::size_t>(metric.radii.size()) != m.vertex_count())
    throw DomainError("radius vector size " + std::to_string(metric.radii.size()) + " != vertex count " +
                      std::to_string(m.vertex_count()));
  for (Eigen::Index i = 0; i < metric.radii.size(); ++i) check_radius(metric.radii[i], metric.background);
}

inline FaceGeometry face_geometry(const WeightedMesh& m, const PackingMetric& metric, const std::vector<double>& lengths,
                                  std::size_t f, bool derivatives) {
  const auto& t = m.topology();
  const auto& v = t.face(f);
  const auto bg = metric.background;
  FaceGeometry g;
  for (int s = 0; s < 3; ++s) g.lengths[s] = lengths[t.face_edge(f, s)];
  g.angles = cpflow::corner_angles(g.lengths[0], g.lengths[1], g.lengths[2], bg);
  g.area = cpflow::face_area(g.angles, g.lengths, bg);
  if (!derivatives) return g;
  // dl_s / dr_x for side s with endpoint corners s+1 and s+2
  std::array<std::array<double, 3>, 3> dl_dr{};
  for (int s = 0; s < 3; ++s) {
    const int x1 = next_slot(s), x2 = prev_slot(s);
    const double phi = m.weight(t.face_edge(f, s));
    const double r1 = metric.radii[v[x1]], r2 = metric.radii[v[x2]];
    dl_dr[s][x1] = edge_length_derivative(r1, r2, phi, g.lengths[s], bg);
    dl_dr[s][x2] = edge_length_derivative(r2, r1, phi, g.lengths[s], bg);
  }
  // With e_k = s - l_k and tan(theta_c / 2) = t_c,
  //   d log t_c = 1/2 [ sum_{k != c} w_k de_k - w_c de_c ]
  //   w_k = sinh l_k / (sinh e_k sinh s),  w_c = sinh(s + e_c) / (sinh e_c sinh s)
  // (Euclidean: sinh -> identity), and d theta_c = sin(theta_c) d log t_c.
  // Differences of coth values are folded into these ratios, so nothing
  // cancels when all dl/dr are equal (tangent circles).
  const double semi = 0.5 * (g.lengths[0] + g.lengths[1] + g.lengths[2]);
  std::array<double, 3> excess{};
  for (int k = 0; k < 3; ++k) excess[k] = 0.5 * (g.lengths[next_slot(k)] + g.lengths[prev_slot(k)] - g.lengths[k]);
  auto ratio = [bg](double num, double d1, double d2) {
    if (bg == Background::Euclidean) return num / (d1 * d2);
    return std::exp(log_sinh(num) - log_sinh(d1) - log_sinh(d2));
  };
  std::array<std::array<double, 3>, 3> de_dr{};  // de_k / dr_x
  for (int k = 0; k < 3; ++k)
    for (int x = 0; x < 3; ++x)
      de_dr[k][x] = 0.5 * (dl_dr[next_slot(k)][x] + dl_dr[prev_slot(k)][x] - dl_dr[k][x]);
  for (int c = 0; c < 3; ++c) {
    std::array<double, 3> w{};
    for (int k = 0; k < 3; ++k)
      w[k] = k == c ? -ratio(semi + excess[c], excess[c], semi) : ratio(g.lengths[k], excess[k], semi);
    const double sin_c = std::sin(g.angles[c]);
    for (int x = 0; x < 3; ++x) {
      double dlog = 0.0;
      for (int k = 0; k < 3; ++k) dlog += w[k] * de_dr[k][x];
      g.radius_derivatives[c][x] = 0.5 * sin_c * dlog;
      if (!std::isfinite(g.radius_derivatives[c][x])) throw DegenerateError("near-degenerate face in angle derivative");
    }
  }
  return g;
}

/// Slots of an edge's endpoints (vertices[0], vertices[1]) inside one incident face.
inline std::pair<int, int> endpoint_slots(const Triangulation& t, std::size_t e, const FaceSide& side) {
  const int x1 = next_slot(side.slot), x2 = prev_slot(side.slot);
  if (t.face(side.face)[x1] == t.edge(e).vertices[0]) return {x1, x2};
  return {x2, x1};
}

}  // namespace detail

/// Lengths, angles, areas and curvatures. Derivative fields are left empty.
inline GeometryState curvatures(const WeightedMesh& m, const PackingMetric& metric, bool with_derivatives = false) {
  detail::check_metric(m, metric);
  const auto& t = m.topology();
  GeometryState st;
  st.background = metric.background;
  st.radii = metric.radii;
  st.k_av = average_curvature(t);
  st.lengths.resize(t.edge_count());
  for (std::size_t e = 0; e < t.edge_count(); ++e) {
    const auto& ev = t.edge(e).vertices;
    st.lengths[e] = edge_length(metric.radii[ev[0]], metric.radii[ev[1]], m.weight(e), metric.background);
  }
  st.faces.reserve(t.face_count());
  st.curvatures = Eigen::VectorXd::Constant(t.vertex_count(), 2.0 * std::numbers::pi);
  for (std::size_t f = 0; f < t.face_count(); ++f) {
    st.faces.push_back(detail::face_geometry(m, metric, st.lengths, f, with_derivatives));
    const auto& v = t.face(f);
    for (int c = 0; c < 3; ++c) st.curvatures[v[c]] -= st.faces.back().angles[c];
    st.total_area += st.faces.back().area;
  }
  return st;
}

/// Partials of the angle at `corner` of `face` with respect to the radii at
/// the face's three corners (slot order).
struct AngleRadiusPartials {
  std::array<std::size_t, 3> vertices{};
  std::array<double, 3> partials{};
};

inline AngleRadiusPartials angle_radius_derivatives(const WeightedMesh& m, const PackingMetric& metric, std::size_t face,
                                                    int corner) {
  detail::check_metric(m, metric);
  const auto& t = m.topology();
  if (face >= t.face_count() || corner < 0 || corner > 2) throw DomainError("face corner out of range");
  std::vector<double> lengths(t.edge_count(), 0.0);
  for (int s = 0; s < 3; ++s) {
    auto e = t.face_edge(face, s);
    const auto& ev = t.edge(e).vertices;
    lengths[e] = edge_length(metric.radii[ev[0]], metric.radii[ev[1]], m.weight(e), metric.background);
  }
  auto g = detail::face_geometry(m, metric, lengths, face, true);
  return {t.face(face), g.radius_derivatives[corner]};
}

/// Which endpoint's radius B_ij is differentiated against. Both give the same
/// value (B is symmetric); the second exists to check that.
enum class BSide { Second, First };

namespace detail {

inline std::vector<double> assemble_B_from(const WeightedMesh& m, const GeometryState& st, BSide which) {
  const auto& t = m.topology();
  std::vector<double> B(t.edge_count(), 0.0);
  for (std::size_t e = 0; e < t.edge_count(); ++e) {
    const auto& ev = t.edge(e).vertices;
    double sum = 0.0;
    for (const auto& side : t.edge(e).sides) {
      auto [slot_i, slot_j] = endpoint_slots(t, e, side);
      if (which == BSide::First) std::swap(slot_i, slot_j);
      sum += st.faces[side.face].radius_derivatives[slot_i][slot_j];
    }
    const auto j = which == BSide::Second ? ev[1] : ev[0];
    B[e] = sum * radius_scale(st.radii[j], st.background);
  }
  return B;
}

inline Eigen::VectorXd assemble_A_from(const WeightedMesh& m, const GeometryState& st) {
  const auto& t = m.topology();
  Eigen::VectorXd A = Eigen::VectorXd::Zero(t.vertex_count());
  if (st.background == Background::Euclidean) return A;
  for (std::size_t f = 0; f < t.face_count(); ++f) {
    const auto& v = t.face(f);
    const auto& D = st.faces[f].radius_derivatives;
    for (int x = 0; x < 3; ++x) A[v[x]] -= D[0][x] + D[1][x] + D[2][x];
  }
  for (Eigen::Index i = 0; i < A.size(); ++i) A[i] *= std::sinh(st.radii[i]);
  return A;
}

inline Eigen::MatrixXd laplacian_from_weights(const Triangulation& t, const std::vector<double>& w) {
  const auto n = static_cast<Eigen::Index>(t.vertex_count());
  Eigen::MatrixXd LB = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t e = 0; e < t.edge_count(); ++e) {
    const auto i = static_cast<Eigen::Index>(t.edge(e).vertices[0]);
    const auto j = static_cast<Eigen::Index>(t.edge(e).vertices[1]);
    if (i == j) continue;  // loop edges cancel
    LB(i, i) += w[e];
    LB(j, j) += w[e];
    LB(i, j) -= w[e];
    LB(j, i) -= w[e];
  }
  return LB;
}

}  // namespace detail

/// Full state including B, A and L = dK/du.
inline GeometryState evaluate(const WeightedMesh& m, const PackingMetric& metric) {
  auto st = curvatures(m, metric, true);
  st.has_derivatives = true;
  st.B = detail::assemble_B_from(m, st, BSide::Second);
  st.A = detail::assemble_A_from(m, st);
  st.L = detail::laplacian_from_weights(m.topology(), st.B);
  st.L.diagonal() += st.A;
  return st;
}

inline std::vector<double> assemble_B(const WeightedMesh& m, const PackingMetric& metric, BSide which = BSide::Second) {
  return detail::assemble_B_from(m, curvatures(m, metric, true), which);
}

inline Eigen::VectorXd assemble_A(const WeightedMesh& m, const PackingMetric& metric) {
  if (metric.background != Background::Hyperbolic) throw DomainError("A is defined in hyperbolic background only");
  return detail::assemble_A_from(m, curvatures(m, metric, true));
}

/// Graph Laplacian L_B of per-edge weights: diagonal sum, off-diagonal -B.
inline Eigen::MatrixXd assemble_LB(const Triangulation& t, const std::vector<double>& B) {
  if (B.size() != t.edge_count()) throw DomainError("one weight per edge required");
  return detail::laplacian_from_weights(t, B);
}

inline Eigen::MatrixXd assemble_L(const WeightedMesh& m, const PackingMetric& metric) { return evaluate(m, metric).L; }

// ---------------------------------------------------------------------------
// Sparse export

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// Non-zero entries in row-major order.
inline std::vector<Triplet> to_triplets(const Eigen::MatrixXd& M) {
  std::vector<Triplet> out;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      if (M(i, j) != 0.0) out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), M(i, j)});
  return out;
}

/// B as a symmetric vertex-by-vertex matrix (parallel edges summed).
inline std::vector<Triplet> B_triplets(const Triangulation& t, const std::vector<double>& B) {
  const auto n = static_cast<Eigen::Index>(t.vertex_count());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t e = 0; e < t.edge_count(); ++e) {
    const auto i = static_cast<Eigen::Index>(t.edge(e).vertices[0]);
    const auto j = static_cast<Eigen::Index>(t.edge(e).vertices[1]);
    if (i == j) continue;
    M(i, j) += B[e];
    M(j, i) += B[e];
  }
  return to_triplets(M);
}

}  // namespace cpflow
