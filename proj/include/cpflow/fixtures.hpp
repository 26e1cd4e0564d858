#pragma once
//
// Built-in closed triangulations used by the tests, the acceptance suite and
// `cpflow fixture`.
//

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpflow/mesh.hpp"

namespace cpflow::fixtures {

inline Triangulation tetrahedron() {
  return Triangulation::from_faces(4, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

/// Poles 0 and 5, equator 1..4.
inline Triangulation octahedron() {
  std::vector<Face> faces;
  for (std::size_t i = 1; i <= 4; ++i) faces.push_back({0, i, i % 4 + 1});
  for (std::size_t i = 1; i <= 4; ++i) faces.push_back({5, i % 4 + 1, i});
  return Triangulation::from_faces(6, std::move(faces));
}

/// Poles 0 and 11, upper ring 1..5, lower ring 6..10.
inline Triangulation icosahedron() {
  std::vector<Face> faces;
  for (std::size_t i = 1; i <= 5; ++i) {
    const std::size_t up = i, up_next = i % 5 + 1;
    const std::size_t lo = 5 + i, lo_next = 5 + i % 5 + 1;
    faces.push_back({0, up, up_next});
    faces.push_back({up, lo, up_next});
    faces.push_back({up_next, lo, lo_next});
    faces.push_back({11, lo_next, lo});
  }
  return Triangulation::from_faces(12, std::move(faces));
}

/// Octahedron with two opposite faces stellar-subdivided: vertices 6 and 7
/// have degree 3. With every weight at pi/2 the Euclidean existence
/// condition fails on {6} (and {7}).
inline Triangulation octahedron_subdivided() {
  std::vector<Face> faces;
  for (std::size_t i = 1; i <= 4; ++i) faces.push_back({0, i, i % 4 + 1});
  for (std::size_t i = 1; i <= 4; ++i) faces.push_back({5, i % 4 + 1, i});
  auto split = [&faces](Face f, std::size_t c) {
    std::erase(faces, f);
    faces.push_back({f[0], f[1], c});
    faces.push_back({f[1], f[2], c});
    faces.push_back({f[2], f[0], c});
  };
  split({0, 1, 2}, 6);
  split({5, 4, 3}, 7);
  return Triangulation::from_faces(8, std::move(faces));
}

/// Simplicial genus-2 surface with 10 vertices and 24 faces (the minimum
/// vertex count for genus 2). Obtained from the connected sum of two 7-vertex
/// tori by bistellar flips and one edge contraction.
inline Triangulation genus2() {
  return Triangulation::from_faces(
      10, {{1, 2, 4}, {1, 3, 4}, {2, 3, 5}, {2, 4, 5}, {3, 4, 6}, {3, 5, 6}, {4, 5, 0}, {4, 6, 0},
           {5, 6, 1}, {6, 0, 2}, {6, 1, 2}, {3, 7, 8}, {3, 1, 8}, {7, 1, 9}, {7, 8, 9}, {1, 8, 0},
           {1, 9, 0}, {9, 0, 3}, {0, 3, 7}, {2, 3, 9}, {5, 0, 7}, {5, 7, 1}, {8, 9, 2}, {8, 2, 0}});
}

/// Generalized genus-2 triangulation: the octagon a b a^-1 b^-1 c d c^-1 d^-1
/// with one midpoint per edge class, coned off from a centre vertex. Centre 0,
/// corner vertex 1 (all eight corners), midpoints 2..5. The centre is joined
/// to vertex 1 by eight distinct edges, so the gluing is given explicitly.
inline Triangulation genus2_generalized() {
  constexpr std::size_t kCentre = 0, kCorner = 1;
  // label class of each octagon side and whether it is traversed inverted
  const std::array<std::size_t, 8> label = {0, 1, 0, 1, 2, 3, 2, 3};
  auto boundary = [&](std::size_t pos) -> std::size_t {
    pos %= 16;
    return pos % 2 == 0 ? kCorner : 2 + label[pos / 2];
  };
  std::vector<Face> faces;
  for (std::size_t k = 0; k < 16; ++k) faces.push_back({kCentre, boundary(k), boundary(k + 1)});
  std::vector<std::pair<FaceSide, FaceSide>> gluing;
  // spoke k+1 is side 1 of face k and side 2 of face k+1
  for (std::size_t k = 0; k < 16; ++k) gluing.push_back({{k, 1}, {(k + 1) % 16, 2}});
  // octagon side k is split into the boundary sides of faces 2k and 2k+1;
  // side k and its inverse partner m are glued head to tail
  for (auto [k, m] : std::array<std::pair<std::size_t, std::size_t>, 4>{{{0, 2}, {1, 3}, {4, 6}, {5, 7}}}) {
    gluing.push_back({{2 * k, 0}, {2 * m + 1, 0}});
    gluing.push_back({{2 * k + 1, 0}, {2 * m, 0}});
  }
  return Triangulation::from_gluing(6, std::move(faces), gluing);
}

/// Named fixtures bundled as files: name -> (triangulation, uniform weight).
struct NamedFixture {
  std::string name;
  Triangulation topology;
  double phi;
};

inline std::vector<NamedFixture> bundled() {
  return {
      {"tetrahedron", tetrahedron(), 0.0},
      {"octahedron", octahedron(), 0.0},
      {"octahedron_orthogonal", octahedron(), kMaxWeight},
      {"icosahedron", icosahedron(), 0.0},
      {"octahedron_subdivided_orthogonal", octahedron_subdivided(), kMaxWeight},
      {"genus2", genus2(), 0.0},
  };
}

}  // namespace cpflow::fixtures
