#pragma once
//
// Combinatorial topology of closed triangulated surfaces.
//
// Edges are positional: an edge is a pair of glued face sides, not a pair of
// vertices. Two vertices may therefore be joined by several edges and a face
// may repeat a vertex (generalized triangulations). A face side is named by
// the corner slot opposite to it, so side `s` of face (v0, v1, v2) runs from
// v[(s+1)%3] to v[(s+2)%3].
//

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpflow/error.hpp"

namespace cpflow {

using Face = std::array<std::size_t, 3>;

inline constexpr double kMaxWeight = std::numbers::pi / 2.0;

struct FaceSide {
  std::size_t face = 0;
  int slot = 0;  // corner slot opposite the side

  friend bool operator==(const FaceSide&, const FaceSide&) = default;
  friend auto operator<=>(const FaceSide&, const FaceSide&) = default;
};

inline int next_slot(int s) { return (s + 1) % 3; }
inline int prev_slot(int s) { return (s + 2) % 3; }

struct Edge {
  std::array<std::size_t, 2> vertices{};  // sorted endpoint vertex indices
  std::array<FaceSide, 2> sides{};        // the two glued face sides, sorted
};

class Triangulation {
 public:
  Triangulation() = default;

  /// Builds from faces alone. Sides with the same unordered vertex pair are
  /// glued in order of appearance (first with second, third with fourth, ...).
  static Triangulation from_faces(std::size_t vertex_count, std::vector<Face> faces) {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<FaceSide>> groups;
    check_faces(vertex_count, faces);
    for (std::size_t f = 0; f < faces.size(); ++f) {
      for (int s = 0; s < 3; ++s) {
        auto a = faces[f][next_slot(s)];
        auto b = faces[f][prev_slot(s)];
        groups[{std::min(a, b), std::max(a, b)}].push_back({f, s});
      }
    }
    std::vector<std::pair<FaceSide, FaceSide>> gluing;
    for (const auto& [key, sides] : groups) {
      if (sides.size() % 2 != 0) {
        throw TopologyError("non-manifold edge {" + std::to_string(key.first) + "," +
                            std::to_string(key.second) + "}: " + std::to_string(sides.size()) +
                            " incident face sides");
      }
      for (std::size_t k = 0; k < sides.size(); k += 2) gluing.emplace_back(sides[k], sides[k + 1]);
    }
    return from_gluing(vertex_count, std::move(faces), gluing);
  }

  /// Builds from faces and an explicit side gluing. Every side of every face
  /// must appear in exactly one pair, and the glued sides must join the same
  /// two vertices.
  static Triangulation from_gluing(std::size_t vertex_count, std::vector<Face> faces,
                                   const std::vector<std::pair<FaceSide, FaceSide>>& gluing) {
    check_faces(vertex_count, faces);
    Triangulation t;
    t.vertex_count_ = vertex_count;
    t.faces_ = std::move(faces);
    const std::size_t nf = t.faces_.size();
    constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::array<std::size_t, 3>> partner_index(nf, {kUnset, kUnset, kUnset});

    std::vector<Edge> edges;
    edges.reserve(gluing.size());
    for (const auto& [s0, s1] : gluing) {
      for (const auto& s : {s0, s1}) {
        if (s.face >= nf || s.slot < 0 || s.slot > 2) throw TopologyError("gluing references a missing face side");
        if (partner_index[s.face][s.slot] != kUnset) {
          throw TopologyError("face " + std::to_string(s.face) + " side " + std::to_string(s.slot) +
                              " glued more than once (non-manifold edge)");
        }
        partner_index[s.face][s.slot] = edges.size();
      }
      if (s0 == s1) throw TopologyError("face side glued to itself");
      auto e0 = t.side_vertices(s0);
      auto e1 = t.side_vertices(s1);
      if (e0 != e1) throw TopologyError("glued sides join different vertex pairs");
      Edge e;
      e.vertices = e0;
      e.sides = {std::min(s0, s1), std::max(s0, s1)};
      edges.push_back(e);
    }
    for (std::size_t f = 0; f < nf; ++f)
      for (int s = 0; s < 3; ++s)
        if (partner_index[f][s] == kUnset)
          throw TopologyError("face " + std::to_string(f) + " side " + std::to_string(s) +
                              " has no partner (boundary or non-manifold edge)");

    // Canonical order: endpoints lexicographic, then first face side.
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return std::tie(a.vertices, a.sides[0]) < std::tie(b.vertices, b.sides[0]);
    });
    t.edges_ = std::move(edges);
    t.face_edges_.assign(nf, {0, 0, 0});
    t.degrees_.assign(vertex_count, 0);
    for (std::size_t e = 0; e < t.edges_.size(); ++e) {
      for (const auto& s : t.edges_[e].sides) t.face_edges_[s.face][s.slot] = e;
      ++t.degrees_[t.edges_[e].vertices[0]];
      ++t.degrees_[t.edges_[e].vertices[1]];
    }
    for (std::size_t v = 0; v < vertex_count; ++v)
      if (t.degrees_[v] == 0) throw TopologyError("dangling vertex " + std::to_string(v));
    return t;
  }

  std::size_t vertex_count() const { return vertex_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t face_count() const { return faces_.size(); }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Face& face(std::size_t f) const { return faces_[f]; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  std::size_t face_edge(std::size_t f, int slot) const { return face_edges_[f][slot]; }
  std::size_t degree(std::size_t v) const { return degrees_[v]; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }
  std::size_t max_degree() const { return *std::max_element(degrees_.begin(), degrees_.end()); }

  std::array<std::size_t, 2> side_vertices(FaceSide s) const {
    auto a = faces_[s.face][next_slot(s.slot)];
    auto b = faces_[s.face][prev_slot(s.slot)];
    return {std::min(a, b), std::max(a, b)};
  }

  friend bool operator==(const Triangulation& a, const Triangulation& b) {
    return a.vertex_count_ == b.vertex_count_ && a.faces_ == b.faces_ && a.face_edges_ == b.face_edges_;
  }

 private:
  static void check_faces(std::size_t vertex_count, const std::vector<Face>& faces) {
    if (vertex_count == 0) throw TopologyError("vertex count must be positive");
    if (faces.empty()) throw TopologyError("no faces");
    for (std::size_t f = 0; f < faces.size(); ++f)
      for (auto v : faces[f])
        if (v >= vertex_count)
          throw TopologyError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                              " outside [0, " + std::to_string(vertex_count) + ")");
  }

  std::size_t vertex_count_ = 0;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::vector<std::array<std::size_t, 3>> face_edges_;
  std::vector<std::size_t> degrees_;
};

inline long euler_characteristic(const Triangulation& t) {
  return static_cast<long>(t.vertex_count()) - static_cast<long>(t.edge_count()) +
         static_cast<long>(t.face_count());
}

/// Triangulation plus an intersection angle in [0, pi/2] on every edge.
class WeightedMesh {
 public:
  WeightedMesh() = default;
  explicit WeightedMesh(Triangulation topology, double phi = 0.0)
      : topology_(std::move(topology)), weights_(topology_.edge_count(), phi) {
    check_weights();
  }
  WeightedMesh(Triangulation topology, std::vector<double> weights)
      : topology_(std::move(topology)), weights_(std::move(weights)) {
    if (weights_.size() != topology_.edge_count()) throw TopologyError("one weight per edge required");
    check_weights();
  }

  const Triangulation& topology() const { return topology_; }
  const std::vector<double>& weights() const { return weights_; }
  double weight(std::size_t e) const { return weights_[e]; }
  std::size_t vertex_count() const { return topology_.vertex_count(); }

  friend bool operator==(const WeightedMesh&, const WeightedMesh&) = default;

 private:
  void check_weights() const {
    for (std::size_t e = 0; e < weights_.size(); ++e)
      if (!(weights_[e] >= 0.0 && weights_[e] <= kMaxWeight))
        throw TopologyError("weight out of range on edge " + std::to_string(e));
  }

  Triangulation topology_;
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Text formats

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string_view>> content_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    auto line = text.substr(pos, end - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) out.emplace_back(lineno, line);
    pos = end + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("expected ") + what + ", got '" + std::string(tok) + "'");
  return value;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

/// Parses the `cpmesh 1` text format and validates the result.
inline WeightedMesh parse_mesh(std::string_view text) {
  using detail::parse_number;
  auto lines = detail::content_lines(text);
  if (lines.empty()) throw ParseError(1, "empty mesh file");
  {
    auto [ln, line] = lines[0];
    auto tok = detail::split_ws(line);
    if (tok.size() != 2 || tok[0] != "cpmesh" || tok[1] != "1")
      throw ParseError(ln, "expected header 'cpmesh 1'");
  }
  if (lines.size() < 2) throw ParseError(lines[0].first, "missing '<N> <F-count> <chi>' line");
  auto [count_line, counts] = lines[1];
  auto ctok = detail::split_ws(counts);
  if (ctok.size() != 3) throw ParseError(count_line, "expected '<N> <F-count> <chi>'");
  auto n = parse_number<std::size_t>(ctok[0], count_line, "vertex count");
  auto nf = parse_number<std::size_t>(ctok[1], count_line, "face count");
  auto chi_declared = parse_number<long>(ctok[2], count_line, "Euler characteristic");
  if (n == 0) throw ParseError(count_line, "vertex count must be positive");

  std::vector<Face> faces;
  faces.reserve(nf);
  std::size_t k = 2;
  for (; k < lines.size() && faces.size() < nf; ++k) {
    auto [ln, line] = lines[k];
    auto tok = detail::split_ws(line);
    if (tok.size() != 4 || tok[0] != "f") throw ParseError(ln, "expected 'f <i> <j> <k>'");
    Face f{};
    for (int c = 0; c < 3; ++c) {
      f[c] = parse_number<std::size_t>(tok[c + 1], ln, "vertex index");
      if (f[c] >= n) throw ParseError(ln, "vertex index " + std::string(tok[c + 1]) + " out of range");
    }
    faces.push_back(f);
  }
  if (faces.size() != nf)
    throw ParseError(lines.back().first, "expected " + std::to_string(nf) + " faces, found " +
                                             std::to_string(faces.size()));

  auto topology = Triangulation::from_faces(n, std::move(faces));
  if (euler_characteristic(topology) != chi_declared)
    throw TopologyError("declared chi=" + std::to_string(chi_declared) + " but V-E+F=" +
                        std::to_string(euler_characteristic(topology)));

  std::vector<double> weights(topology.edge_count(), 0.0);
  std::vector<bool> seen(topology.edge_count(), false);
  for (; k < lines.size(); ++k) {
    auto [ln, line] = lines[k];
    auto tok = detail::split_ws(line);
    if (tok.size() != 3 || tok[0] != "w") throw ParseError(ln, "expected 'w <edge-index> <phi>'");
    auto e = parse_number<std::size_t>(tok[1], ln, "edge index");
    if (e >= weights.size()) throw ParseError(ln, "edge index " + std::string(tok[1]) + " out of range");
    if (seen[e]) throw ParseError(ln, "duplicate weight for edge " + std::string(tok[1]));
    auto phi = parse_number<double>(tok[2], ln, "weight");
    if (!(phi >= 0.0 && phi <= kMaxWeight)) throw ParseError(ln, "weight out of range [0, pi/2]: " + std::string(tok[2]));
    weights[e] = phi;
    seen[e] = true;
  }
  return WeightedMesh(std::move(topology), std::move(weights));
}

inline std::string serialize_mesh(const WeightedMesh& m) {
  const auto& t = m.topology();
  std::ostringstream os;
  os << "cpmesh 1\n" << t.vertex_count() << ' ' << t.face_count() << ' ' << euler_characteristic(t) << '\n';
  for (const auto& f : t.faces()) os << "f " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  for (std::size_t e = 0; e < t.edge_count(); ++e) os << "w " << e << ' ' << detail::format_double(m.weight(e)) << '\n';
  return os.str();
}

/// Parses a radii file (`r <i> <radius>` per vertex). Every vertex must be listed once.
inline std::vector<double> parse_radii(std::string_view text, std::size_t vertex_count) {
  std::vector<double> radii(vertex_count, 0.0);
  std::vector<bool> seen(vertex_count, false);
  for (auto [ln, line] : detail::content_lines(text)) {
    auto tok = detail::split_ws(line);
    if (tok.size() != 3 || tok[0] != "r") throw ParseError(ln, "expected 'r <i> <radius>'");
    auto i = detail::parse_number<std::size_t>(tok[1], ln, "vertex index");
    if (i >= vertex_count) throw ParseError(ln, "vertex index " + std::string(tok[1]) + " out of range");
    if (seen[i]) throw ParseError(ln, "duplicate radius for vertex " + std::string(tok[1]));
    auto r = detail::parse_number<double>(tok[2], ln, "radius");
    if (!(r > 0.0) || !std::isfinite(r)) throw ParseError(ln, "radius must be positive and finite");
    radii[i] = r;
    seen[i] = true;
  }
  for (std::size_t i = 0; i < vertex_count; ++i)
    if (!seen[i]) throw ParseError(0, "missing radius for vertex " + std::to_string(i));
  return radii;
}

inline std::string serialize_radii(const std::vector<double>& radii) {
  std::ostringstream os;
  for (std::size_t i = 0; i < radii.size(); ++i) os << "r " << i << ' ' << detail::format_double(radii[i]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Links of vertex subsets and the Euclidean existence condition

struct LinkPair {
  std::size_t edge = 0;
  std::size_t vertex = 0;
  std::size_t face = 0;  // the triangle spanned by edge and vertex
};

struct SubsetLink {
  std::vector<std::size_t> subset;  // sorted
  std::vector<LinkPair> link_pairs;
  std::vector<std::size_t> cell_vertices;  // F_I: cells with all vertices in the subset
  std::vector<std::size_t> cell_edges;
  std::vector<std::size_t> cell_faces;
  long chi = 0;  // Euler characteristic of F_I
};

inline SubsetLink subset_link(const Triangulation& t, std::vector<std::size_t> subset) {
  const auto n = t.vertex_count();
  std::vector<bool> in(n, false);
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  for (auto v : subset) {
    if (v >= n) throw DomainError("subset vertex " + std::to_string(v) + " out of range");
    in[v] = true;
  }
  if (subset.empty() || subset.size() == n) throw DomainError("subset must be proper and non-empty");

  SubsetLink out;
  out.subset = subset;
  out.cell_vertices = subset;
  for (std::size_t f = 0; f < t.face_count(); ++f) {
    const auto& face = t.face(f);
    for (int s = 0; s < 3; ++s) {
      auto e = t.face_edge(f, s);
      const auto& ev = t.edge(e).vertices;
      if (!in[ev[0]] && !in[ev[1]] && in[face[s]]) out.link_pairs.push_back({e, face[s], f});
    }
    if (in[face[0]] && in[face[1]] && in[face[2]]) out.cell_faces.push_back(f);
  }
  for (std::size_t e = 0; e < t.edge_count(); ++e) {
    const auto& ev = t.edge(e).vertices;
    if (in[ev[0]] && in[ev[1]]) out.cell_edges.push_back(e);
  }
  out.chi = static_cast<long>(out.cell_vertices.size()) - static_cast<long>(out.cell_edges.size()) +
            static_cast<long>(out.cell_faces.size());
  return out;
}

struct EuclideanConditionReport {
  bool holds = true;
  std::optional<std::vector<std::size_t>> witness;  // first violating subset
  std::size_t subsets_checked = 0;
};

inline constexpr std::size_t kDefaultSubsetCap = 20;

/// Brute-force check of the Euclidean existence inequality over all proper
/// subsets, ordered by size then lexicographically. Near-equality (within
/// 1e-9 relative) counts as a violation since the inequality is strict.
inline EuclideanConditionReport check_euclidean_condition(const WeightedMesh& m,
                                                          std::size_t vertex_cap = kDefaultSubsetCap) {
  const auto& t = m.topology();
  const std::size_t n = t.vertex_count();
  if (n > vertex_cap || n > 62)
    throw DomainError("vertex count " + std::to_string(n) + " exceeds subset enumeration cap " +
                      std::to_string(std::min<std::size_t>(vertex_cap, 62)) +
                      "; use numerical existence detection instead");
  const double pi = std::numbers::pi;
  const double chi = static_cast<double>(euler_characteristic(t));

  struct FaceMask {
    std::uint64_t all;
    std::array<std::uint64_t, 3> side;  // endpoints of side s
    std::array<std::uint64_t, 3> corner;
    std::array<double, 3> gap;          // pi - phi of side s
  };
  std::vector<FaceMask> faces;
  for (std::size_t f = 0; f < t.face_count(); ++f) {
    const auto& v = t.face(f);
    FaceMask fm{};
    fm.all = (1ull << v[0]) | (1ull << v[1]) | (1ull << v[2]);
    for (int s = 0; s < 3; ++s) {
      fm.side[s] = (1ull << v[next_slot(s)]) | (1ull << v[prev_slot(s)]);
      fm.corner[s] = 1ull << v[s];
      fm.gap[s] = pi - m.weight(t.face_edge(f, s));
    }
    faces.push_back(fm);
  }
  std::vector<std::uint64_t> edge_masks;
  for (const auto& e : t.edges()) edge_masks.push_back((1ull << e.vertices[0]) | (1ull << e.vertices[1]));

  EuclideanConditionReport report;
  std::vector<std::size_t> combo;
  for (std::size_t k = 1; k < n; ++k) {
    combo.resize(k);
    for (std::size_t i = 0; i < k; ++i) combo[i] = i;
    while (true) {
      std::uint64_t mask = 0;
      for (auto v : combo) mask |= 1ull << v;
      double link = 0.0;
      long cells = static_cast<long>(k);
      for (const auto& fm : faces) {
        for (int s = 0; s < 3; ++s)
          if ((fm.side[s] & mask) == 0 && (fm.corner[s] & mask)) link += fm.gap[s];
        if ((fm.all & mask) == fm.all) ++cells;
      }
      for (auto em : edge_masks)
        if ((em & mask) == em) --cells;
      const double lhs = 2.0 * pi * static_cast<double>(k) * chi / static_cast<double>(n);
      const double rhs = -link + 2.0 * pi * static_cast<double>(cells);
      ++report.subsets_checked;
      const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
      if (!(lhs - rhs > 1e-9 * scale)) {
        report.holds = false;
        report.witness = combo;
        return report;
      }
      // next combination in lexicographic order
      std::size_t i = k;
      while (i > 0 && combo[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++combo[i - 1];
      for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
    }
  }
  return report;
}

}  // namespace cpflow
