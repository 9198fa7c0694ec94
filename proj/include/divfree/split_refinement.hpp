#pragma once

/// \file split_refinement.hpp
/// \brief Powell-Sabin (2D) and Worsey-Farin (3D) macro-element splits with
/// singular-feature bookkeeping.
///
/// Both splits number their children grouped by the split point they contain:
/// every child has exactly one facet split point as a vertex, and the children
/// around split point z get consecutive ids. The child with id
/// `group_offsets[z] + j - 1` is K_z^(j), so the raw piecewise-constant
/// pressure numbering sigma(z, j) is simply the cell id.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "divfree/geometry_mesh.hpp"

namespace divfree {

enum class SplitKind { PowellSabin, WorseyFarin };

/// Call counters for the dimension-specific construction paths.
struct Instrumentation {
  static inline std::atomic<long> powell_sabin_splits{0};
  static inline std::atomic<long> worsey_farin_splits{0};
  static inline std::atomic<long> transforms_2d{0};
  static inline std::atomic<long> transforms_3d{0};
  static void reset() {
    powell_sabin_splits = 0;
    worsey_farin_splits = 0;
    transforms_2d = 0;
    transforms_3d = 0;
  }
};

/// Edge split point of a Powell-Sabin split; one per coarse edge.
struct SingularPoint2D {
  int vertex = -1;
  Point<2> location = Point<2>::Zero();
  bool is_interior = false;
  int coarse_facet = -1;
  /// K_z^(1..n_z); consecutive entries (cyclically when interior) share an edge.
  std::vector<int> fan;
};

/// Singular edge of a Worsey-Farin split; three per coarse face.
struct SingularEdge3D {
  std::array<int, 2> vertices{-1, -1};  // {face split point, coarse vertex}
  bool is_interior = false;
  int coarse_facet = -1;
  /// K_e^(1..n_e); consecutive entries (cyclically when interior) share a face.
  std::vector<int> fan;
};

/// Face split point of a Worsey-Farin split; one per coarse face.
///
/// Interior points: K^(1..3) lie in the lower-id coarse cell, K^(4..6) in the
/// other, and K^(j), K^(j+3) share the face (z, edge_j) of the coarse face.
struct FaceSplitPoint3D {
  int vertex = -1;
  bool is_interior = false;
  int coarse_facet = -1;
  std::vector<int> fan;
};

/// Clough-Tocher refinement data of one coarse face.
struct CloughTocherFace {
  int coarse_facet = -1;
  int split_vertex = -1;
  std::array<std::array<int, 2>, 3> interior_edges{};  // {split point, coarse vertex}
  int designated_edge = 0;                             // index into interior_edges
};

template <int Dim>
struct SplitMesh {
  static constexpr int dim = Dim;
  SplitKind kind = Dim == 2 ? SplitKind::PowellSabin : SplitKind::WorseyFarin;
  Triangulation<Dim> mesh;
  std::vector<int> parent;
  int num_coarse_cells = 0;
  int num_coarse_vertices = 0;

  /// Cells of group z are ids [group_offsets[z], group_offsets[z+1]).
  std::vector<int> group_offsets;
  std::vector<char> group_interior;

  std::vector<SingularPoint2D> singular_points;    // 2D only
  std::vector<SingularEdge3D> singular_edges;      // 3D only
  std::vector<FaceSplitPoint3D> face_split_points; // 3D only
  std::vector<CloughTocherFace> ct_faces;          // 3D only

  int num_groups() const { return static_cast<int>(group_offsets.size()) - 1; }
  int group_size(int z) const { return group_offsets[z + 1] - group_offsets[z]; }
  /// sigma(z, j) with 1-based j.
  int sigma(int z, int j) const { return group_offsets[z] + j - 1; }
  int num_interior_groups() const {
    return static_cast<int>(std::count(group_interior.begin(), group_interior.end(), 1));
  }
  int num_boundary_groups() const { return num_groups() - num_interior_groups(); }
};

namespace detail {

/// Intersection of segment [c0, c1] with the hyperplane of facet `f`, placed
/// back onto the facet through its barycentric coordinates. Throws if the
/// crossing is not strictly inside both the segment and the facet.
template <int Dim>
Point<Dim> segment_facet_crossing(const Point<Dim>& c0, const Point<Dim>& c1,
                                  const std::array<Point<Dim>, Dim>& f) {
  Point<Dim> normal;
  if constexpr (Dim == 2) {
    const Point<2> e = f[1] - f[0];
    normal = Point<2>(-e[1], e[0]);
  } else {
    normal = (f[1] - f[0]).cross(f[2] - f[0]);
  }
  const double denom = normal.dot(c1 - c0);
  if (std::abs(denom) <= kGeomTol * normal.norm())
    throw ConstructionError("incenter segment parallel to shared facet");
  const double t = normal.dot(f[0] - c0) / denom;
  if (!(t > kGeomTol && t < 1.0 - kGeomTol))
    throw ConstructionError("incenter segment does not cross shared facet");
  const Point<Dim> x = c0 + t * (c1 - c0);

  // Barycentric coordinates within the facet, least squares in its plane.
  Eigen::Matrix<double, Dim, Dim - 1> E;
  for (int k = 0; k < Dim - 1; ++k) E.col(k) = f[k + 1] - f[0];
  const Eigen::Matrix<double, Dim - 1, 1> s =
      (E.transpose() * E).ldlt().solve(E.transpose() * (x - f[0]));
  const double s0 = 1.0 - s.sum();
  if (!(s0 > kGeomTol && (s.array() > kGeomTol).all()))
    throw ConstructionError("incenter segment crosses shared facet outside its interior");
  return f[0] + E * s;
}

template <int Dim>
std::array<Point<Dim>, Dim> facet_points(const Triangulation<Dim>& t, const Facet<Dim>& f) {
  std::array<Point<Dim>, Dim> p;
  for (int k = 0; k < Dim; ++k) p[k] = t.vertices[f.vertices[k]];
  return p;
}

/// Rotates/reflects a cyclic fan so it starts at its lowest cell id and
/// continues toward the lower of the two neighbors.
inline std::vector<int> canonical_cycle(std::vector<int> fan) {
  const auto n = fan.size();
  const auto start = std::min_element(fan.begin(), fan.end()) - fan.begin();
  std::rotate(fan.begin(), fan.begin() + start, fan.end());
  if (n > 2 && fan[n - 1] < fan[1]) std::reverse(fan.begin() + 1, fan.end());
  return fan;
}

}  // namespace detail

/// Powell-Sabin split. Each coarse triangle yields six children; every coarse
/// edge yields one singular vertex (interior edge: where the incenter-incenter
/// segment crosses it; boundary edge: its midpoint).
inline SplitMesh<2> powell_sabin_split(const Triangulation<2>& t) {
  ++Instrumentation::powell_sabin_splits;
  const int nv = t.num_vertices();
  const int nf = t.num_facets();
  const int nc = t.num_cells();

  std::vector<Point<2>> verts(t.vertices);
  verts.reserve(nv + nf + nc);
  std::vector<Point<2>> centers(nc);
  for (int c = 0; c < nc; ++c) centers[c] = incenter(t.cells[c], t);
  for (int f = 0; f < nf; ++f) {
    const auto& F = t.facets[f];
    const auto fp = detail::facet_points(t, F);
    if (F.is_boundary())
      verts.push_back(0.5 * (fp[0] + fp[1]));
    else
      verts.push_back(
          detail::segment_facet_crossing<2>(centers[F.cells[0]], centers[F.cells[1]], fp));
  }
  for (int c = 0; c < nc; ++c) verts.push_back(centers[c]);
  auto center_id = [&](int c) { return nv + nf + c; };

  SplitMesh<2> sm;
  sm.num_coarse_cells = nc;
  sm.num_coarse_vertices = nv;
  std::vector<Simplex<2>> cells;
  cells.reserve(6 * static_cast<std::size_t>(nc));
  sm.group_offsets.push_back(0);
  for (int f = 0; f < nf; ++f) {
    const auto& F = t.facets[f];
    const int a = F.vertices[0], b = F.vertices[1], m = nv + f;
    const int lo = F.cells[0];
    cells.push_back({center_id(lo), a, m});
    cells.push_back({center_id(lo), m, b});
    sm.parent.insert(sm.parent.end(), {lo, lo});
    if (!F.is_boundary()) {
      const int hi = F.cells[1];
      cells.push_back({center_id(hi), m, b});
      cells.push_back({center_id(hi), a, m});
      sm.parent.insert(sm.parent.end(), {hi, hi});
    }
    sm.group_offsets.push_back(static_cast<int>(cells.size()));
    sm.group_interior.push_back(F.is_boundary() ? 0 : 1);
  }
  sm.mesh = make_triangulation<2>(std::move(verts), std::move(cells));

  for (int f = 0; f < nf; ++f) {
    SingularPoint2D z;
    z.vertex = nv + f;
    z.location = sm.mesh.vertices[z.vertex];
    z.is_interior = sm.group_interior[f] != 0;
    z.coarse_facet = f;
    for (int k = sm.group_offsets[f]; k < sm.group_offsets[f + 1]; ++k) z.fan.push_back(k);
    if (z.is_interior) z.fan = detail::canonical_cycle(z.fan);
    sm.singular_points.push_back(std::move(z));
  }
  return sm;
}

/// Worsey-Farin split. Each coarse tetrahedron yields twelve children: the
/// incenter joined to the Clough-Tocher refinement of each face, whose split
/// point is the incenter-incenter crossing (interior face) or the barycenter
/// (boundary face).
inline SplitMesh<3> worsey_farin_split(const Triangulation<3>& t) {
  ++Instrumentation::worsey_farin_splits;
  const int nv = t.num_vertices();
  const int nf = t.num_facets();
  const int nc = t.num_cells();

  std::vector<Point<3>> verts(t.vertices);
  verts.reserve(nv + nf + nc);
  std::vector<Point<3>> centers(nc);
  for (int c = 0; c < nc; ++c) centers[c] = incenter(t.cells[c], t);
  for (int f = 0; f < nf; ++f) {
    const auto& F = t.facets[f];
    const auto fp = detail::facet_points(t, F);
    if (F.is_boundary())
      verts.push_back((fp[0] + fp[1] + fp[2]) / 3.0);
    else
      verts.push_back(
          detail::segment_facet_crossing<3>(centers[F.cells[0]], centers[F.cells[1]], fp));
  }
  for (int c = 0; c < nc; ++c) verts.push_back(centers[c]);
  auto center_id = [&](int c) { return nv + nf + c; };

  SplitMesh<3> sm;
  sm.num_coarse_cells = nc;
  sm.num_coarse_vertices = nv;
  std::vector<Simplex<3>> cells;
  cells.reserve(12 * static_cast<std::size_t>(nc));
  sm.group_offsets.push_back(0);
  for (int f = 0; f < nf; ++f) {
    const auto& F = t.facets[f];
    const int m = nv + f;
    const auto& v = F.vertices;  // sorted: a < b < c
    const std::array<std::array<int, 2>, 3> edges{{{v[0], v[1]}, {v[1], v[2]}, {v[2], v[0]}}};
    const int sides = F.is_boundary() ? 1 : 2;
    for (int s = 0; s < sides; ++s) {
      const int owner = F.cells[s];
      for (const auto& e : edges) {
        cells.push_back({center_id(owner), m, e[0], e[1]});
        sm.parent.push_back(owner);
      }
    }
    sm.group_offsets.push_back(static_cast<int>(cells.size()));
    sm.group_interior.push_back(F.is_boundary() ? 0 : 1);
  }
  sm.mesh = make_triangulation<3>(std::move(verts), std::move(cells));

  for (int f = 0; f < nf; ++f) {
    const auto& F = t.facets[f];
    const int m = nv + f;
    const int base = sm.group_offsets[f];
    const bool interior = sm.group_interior[f] != 0;

    FaceSplitPoint3D z;
    z.vertex = m;
    z.is_interior = interior;
    z.coarse_facet = f;
    for (int k = base; k < sm.group_offsets[f + 1]; ++k) z.fan.push_back(k);
    sm.face_split_points.push_back(z);

    // K_j and K_{j+1} (j cyclic) share the edge from m to the vertex shared
    // by face edges j and j+1: b, c, a for j = 1, 2, 3.
    const std::array<int, 3> shared{F.vertices[1], F.vertices[2], F.vertices[0]};
    for (int j = 0; j < 3; ++j) {
      const int jn = (j + 1) % 3;
      SingularEdge3D e;
      e.vertices = {m, shared[j]};
      e.is_interior = interior;
      e.coarse_facet = f;
      if (interior) {
        e.fan = detail::canonical_cycle({base + j, base + jn, base + jn + 3, base + j + 3});
      } else {
        e.fan = {std::min(base + j, base + jn), std::max(base + j, base + jn)};
      }
      sm.singular_edges.push_back(std::move(e));
    }

    CloughTocherFace ct;
    ct.coarse_facet = f;
    ct.split_vertex = m;
    for (int k = 0; k < 3; ++k) ct.interior_edges[k] = {m, F.vertices[k]};
    ct.designated_edge = 0;  // outer endpoint F.vertices[0] has the smallest id
    sm.ct_faces.push_back(ct);
  }
  return sm;
}

// ---------------------------------------------------------------------------
// Singularity check

struct SingularityCheck {
  int feature = -1;
  bool pass = false;
  int directions = 0;  // incident edges (2D) or faces (3D) examined
  int lines_or_planes = 0;
};

namespace detail {

template <int Dim>
int count_directions(std::vector<Point<Dim>> dirs, double tol) {
  std::vector<Point<Dim>> reps;
  for (auto& d : dirs) {
    d.normalize();
    bool found = false;
    for (const auto& r : reps) {
      double c;
      if constexpr (Dim == 2)
        c = std::abs(r[0] * d[1] - r[1] * d[0]);
      else
        c = r.cross(d).norm();
      if (c <= tol) {
        found = true;
        break;
      }
    }
    if (!found) reps.push_back(d);
  }
  return static_cast<int>(reps.size());
}

template <int Dim>
std::vector<std::vector<int>> vertex_to_cells(const Triangulation<Dim>& t) {
  std::vector<std::vector<int>> v2c(t.num_vertices());
  for (int c = 0; c < t.num_cells(); ++c)
    for (int v : t.cells[c]) v2c[v].push_back(c);
  return v2c;
}

}  // namespace detail

/// Tolerance of the singular-feature predicate.
inline constexpr double kSingularTol = 1e-10;

/// 2D: do the edges of `t` meeting at vertex `z` fall on exactly two lines?
inline SingularityCheck check_singular_vertex(const Triangulation<2>& t,
                                              const std::vector<int>& cells_at_z, int z,
                                              double tol = kSingularTol) {
  std::vector<int> nbrs;
  for (int c : cells_at_z)
    for (int v : t.cells[c])
      if (v != z) nbrs.push_back(v);
  std::sort(nbrs.begin(), nbrs.end());
  nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  std::vector<Point<2>> dirs;
  for (int v : nbrs) dirs.push_back(t.vertices[v] - t.vertices[z]);
  SingularityCheck r;
  r.directions = static_cast<int>(dirs.size());
  r.lines_or_planes = detail::count_directions<2>(dirs, tol);
  r.pass = r.lines_or_planes == 2;
  return r;
}

/// 3D: do the faces of `t` meeting at edge (p, q) fall on exactly two planes?
inline SingularityCheck check_singular_edge(const Triangulation<3>& t,
                                            const std::vector<int>& cells_at_p, int p, int q,
                                            double tol = kSingularTol) {
  std::vector<int> others;
  for (int c : cells_at_p) {
    const auto& s = t.cells[c];
    if (std::find(s.begin(), s.end(), q) == s.end()) continue;
    for (int v : s)
      if (v != p && v != q) others.push_back(v);
  }
  std::sort(others.begin(), others.end());
  others.erase(std::unique(others.begin(), others.end()), others.end());
  const Point<3> e = t.vertices[q] - t.vertices[p];
  std::vector<Point<3>> normals;
  for (int v : others) normals.push_back(e.cross(t.vertices[v] - t.vertices[p]));
  SingularityCheck r;
  r.directions = static_cast<int>(normals.size());
  r.lines_or_planes = detail::count_directions<3>(normals, tol);
  r.pass = r.lines_or_planes == 2;
  return r;
}

/// Checks every recorded singular feature geometrically, using only the split
/// mesh connectivity and coordinates (not the recorded fans).
template <int Dim>
std::vector<SingularityCheck> verify_singularity(const SplitMesh<Dim>& sm,
                                                 double tol = kSingularTol) {
  const auto v2c = detail::vertex_to_cells(sm.mesh);
  std::vector<SingularityCheck> out;
  if constexpr (Dim == 2) {
    for (std::size_t i = 0; i < sm.singular_points.size(); ++i) {
      const int z = sm.singular_points[i].vertex;
      auto r = check_singular_vertex(sm.mesh, v2c[z], z, tol);
      r.feature = static_cast<int>(i);
      out.push_back(r);
    }
  } else {
    for (std::size_t i = 0; i < sm.singular_edges.size(); ++i) {
      const auto& e = sm.singular_edges[i];
      auto r = check_singular_edge(sm.mesh, v2c[e.vertices[0]], e.vertices[0], e.vertices[1], tol);
      r.feature = static_cast<int>(i);
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split file: mesh format plus `#parents` and `#singular` sections.

template <int Dim>
void write_split(const SplitMesh<Dim>& sm, std::ostream& os) {
  write_mesh(sm.mesh, os);
  os << "#parents\n";
  for (int p : sm.parent) os << p << '\n';
  auto fan = [&os](const std::vector<int>& f) {
    os << ' ' << f.size();
    for (int c : f) os << ' ' << c;
    os << '\n';
  };
  if constexpr (Dim == 2) {
    os << "#singular " << sm.singular_points.size() << '\n';
    for (const auto& z : sm.singular_points) {
      os << "point " << z.vertex << ' ' << (z.is_interior ? 1 : 0);
      fan(z.fan);
    }
  } else {
    os << "#singular " << sm.singular_edges.size() + sm.face_split_points.size() << '\n';
    for (const auto& z : sm.face_split_points) {
      os << "face " << z.vertex << ' ' << (z.is_interior ? 1 : 0);
      fan(z.fan);
    }
    for (const auto& e : sm.singular_edges) {
      os << "edge " << e.vertices[0] << ' ' << e.vertices[1] << ' ' << (e.is_interior ? 1 : 0);
      fan(e.fan);
    }
  }
}

}  // namespace divfree
