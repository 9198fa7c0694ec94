#pragma once

/// \file geometry_mesh.hpp
/// \brief Coarse simplicial meshes of the unit square/cube, geometric
/// predicates and the plain-text mesh format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "divfree/errors.hpp"

namespace divfree {

/// Absolute tolerance for geometric predicates on unit-scale coordinates.
inline constexpr double kGeomTol = 1e-12;

/// Neighbor marker for a facet on the domain boundary.
inline constexpr int kBoundary = -1;

template <int Dim>
using Point = Eigen::Matrix<double, Dim, 1>;

/// Vertex ids of a simplex, positively oriented once inside a Triangulation.
template <int Dim>
using Simplex = std::array<int, Dim + 1>;

/// Sorted vertex ids of a (Dim-1)-dimensional facet.
template <int Dim>
using FacetKey = std::array<int, Dim>;

/// A facet of the mesh with the one or two cells that own it.
template <int Dim>
struct Facet {
  FacetKey<Dim> vertices{};
  std::array<int, 2> cells{kBoundary, kBoundary};  // cells[0] < cells[1] when interior
  std::array<int, 2> local{-1, -1};                // local vertex opposite the facet
  bool is_boundary() const { return cells[1] == kBoundary; }
};

template <int Dim>
struct Triangulation {
  static_assert(Dim == 2 || Dim == 3, "only triangles and tetrahedra");
  static constexpr int dim = Dim;

  std::vector<Point<Dim>> vertices;
  std::vector<Simplex<Dim>> cells;
  /// facet_adjacency[c][i]: neighbor across the facet opposite local vertex i.
  std::vector<std::array<int, Dim + 1>> facet_adjacency;
  /// cell_facets[c][i]: facet id opposite local vertex i.
  std::vector<std::array<int, Dim + 1>> cell_facets;
  std::vector<Facet<Dim>> facets;
  std::vector<char> boundary_vertex;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int num_facets() const { return static_cast<int>(facets.size()); }
  int num_boundary_facets() const {
    return static_cast<int>(std::count_if(facets.begin(), facets.end(),
                                          [](const Facet<Dim>& f) { return f.is_boundary(); }));
  }
  int num_interior_facets() const { return num_facets() - num_boundary_facets(); }
};

// ---------------------------------------------------------------------------
// Predicates

/// d! times the signed measure of the simplex spanned by `p`.
template <int Dim>
double signed_volume_scaled(const std::array<Point<Dim>, Dim + 1>& p) {
  Eigen::Matrix<double, Dim, Dim> J;
  for (int k = 0; k < Dim; ++k) J.col(k) = p[k + 1] - p[0];
  return J.determinant();
}

template <int Dim>
constexpr double factorial_dim() {
  return Dim == 2 ? 2.0 : 6.0;
}

template <int Dim>
std::array<Point<Dim>, Dim + 1> cell_points(const Triangulation<Dim>& t, int c) {
  std::array<Point<Dim>, Dim + 1> p;
  for (int k = 0; k <= Dim; ++k) p[k] = t.vertices[t.cells[c][k]];
  return p;
}

template <int Dim>
double signed_measure(const std::array<Point<Dim>, Dim + 1>& p) {
  return signed_volume_scaled<Dim>(p) / factorial_dim<Dim>();
}

template <int Dim>
double cell_measure(const Triangulation<Dim>& t, int c) {
  return signed_measure<Dim>(cell_points(t, c));
}

/// Measure of a facet given its Dim vertices (edge length or triangle area).
template <int Dim>
double facet_measure(const std::array<Point<Dim>, Dim>& f) {
  if constexpr (Dim == 2) {
    return (f[1] - f[0]).norm();
  } else {
    return 0.5 * (f[1] - f[0]).cross(f[2] - f[0]).norm();
  }
}

/// Facet-measure weighted vertex average; equidistant from all facets.
template <int Dim>
Point<Dim> incenter(const std::array<Point<Dim>, Dim + 1>& p) {
  if (std::abs(signed_measure<Dim>(p)) <= kGeomTol)
    throw MeshError("incenter: degenerate simplex");
  Point<Dim> acc = Point<Dim>::Zero();
  double total = 0.0;
  for (int i = 0; i <= Dim; ++i) {
    std::array<Point<Dim>, Dim> f;
    for (int k = 0, m = 0; k <= Dim; ++k)
      if (k != i) f[m++] = p[k];
    const double w = facet_measure<Dim>(f);
    acc += w * p[i];
    total += w;
  }
  return acc / total;
}

template <int Dim>
Point<Dim> incenter(const Simplex<Dim>& s, const Triangulation<Dim>& t) {
  std::array<Point<Dim>, Dim + 1> p;
  for (int k = 0; k <= Dim; ++k) {
    if (s[k] < 0 || s[k] >= t.num_vertices()) throw MeshError("incenter: vertex id out of range");
    p[k] = t.vertices[s[k]];
  }
  return incenter<Dim>(p);
}

/// Barycentric coordinates of `x` with respect to the simplex `p`.
template <int Dim>
Eigen::Matrix<double, Dim + 1, 1> barycentric(const std::array<Point<Dim>, Dim + 1>& p,
                                              const Point<Dim>& x) {
  Eigen::Matrix<double, Dim, Dim> J;
  for (int k = 0; k < Dim; ++k) J.col(k) = p[k + 1] - p[0];
  const Point<Dim> tail = J.partialPivLu().solve(x - p[0]);
  Eigen::Matrix<double, Dim + 1, 1> lam;
  lam(0) = 1.0 - tail.sum();
  lam.template tail<Dim>() = tail;
  return lam;
}

/// Largest vertex-to-vertex distance.
template <int Dim>
double diameter(const std::array<Point<Dim>, Dim + 1>& p) {
  double d = 0.0;
  for (int i = 0; i <= Dim; ++i)
    for (int j = i + 1; j <= Dim; ++j) d = std::max(d, (p[i] - p[j]).norm());
  return d;
}

template <int Dim>
double mesh_size(const Triangulation<Dim>& t) {
  double h = 0.0;
  for (int c = 0; c < t.num_cells(); ++c) h = std::max(h, diameter<Dim>(cell_points(t, c)));
  return h;
}

template <int Dim>
double total_measure(const Triangulation<Dim>& t) {
  double s = 0.0;
  for (int c = 0; c < t.num_cells(); ++c) s += cell_measure(t, c);
  return s;
}

// ---------------------------------------------------------------------------
// Construction

/// Builds a triangulation: orients every cell positively (swapping its first
/// two vertices when needed) and derives facets, adjacency and boundary flags.
/// Throws MeshError on bad indices, degenerate cells or non-manifold facets.
template <int Dim>
Triangulation<Dim> make_triangulation(std::vector<Point<Dim>> vertices,
                                      std::vector<Simplex<Dim>> cells) {
  Triangulation<Dim> t;
  t.vertices = std::move(vertices);
  t.cells = std::move(cells);
  const int nv = t.num_vertices();
  const int nc = t.num_cells();

  for (int c = 0; c < nc; ++c) {
    auto& s = t.cells[c];
    for (int k = 0; k <= Dim; ++k)
      if (s[k] < 0 || s[k] >= nv)
        throw MeshError("cell " + std::to_string(c) + ": vertex id out of range");
    const double vol = cell_measure(t, c);
    if (!(std::abs(vol) > kGeomTol))
      throw MeshError("cell " + std::to_string(c) + ": degenerate (zero measure)");
    if (vol < 0) std::swap(s[0], s[1]);
  }

  struct Slot {
    FacetKey<Dim> key;
    int cell;
    int local;
  };
  std::vector<Slot> slots;
  slots.reserve(static_cast<std::size_t>(nc) * (Dim + 1));
  for (int c = 0; c < nc; ++c) {
    for (int i = 0; i <= Dim; ++i) {
      FacetKey<Dim> key;
      for (int k = 0, m = 0; k <= Dim; ++k)
        if (k != i) key[m++] = t.cells[c][k];
      std::sort(key.begin(), key.end());
      slots.push_back({key, c, i});
    }
  }
  // Stable sort keeps (cell, local) discovery order within equal keys.
  std::vector<int> order(slots.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return slots[a].key < slots[b].key; });

  t.facet_adjacency.assign(nc, {});
  t.cell_facets.assign(nc, {});
  for (auto& a : t.facet_adjacency) a.fill(kBoundary);

  // Facets are numbered by first discovery (cell-major), independent of the
  // lexicographic grouping used to pair them.
  std::vector<int> group_start;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k + 1;
    while (e < order.size() && slots[order[e]].key == slots[order[k]].key) ++e;
    if (e - k > 2) throw MeshError("non-manifold facet shared by more than two cells");
    group_start.push_back(static_cast<int>(k));
    k = e;
  }
  std::vector<std::pair<int, int>> first_seen;  // (first slot index, group)
  first_seen.reserve(group_start.size());
  for (std::size_t g = 0; g < group_start.size(); ++g)
    first_seen.emplace_back(order[group_start[g]], static_cast<int>(g));
  std::sort(first_seen.begin(), first_seen.end());

  t.facets.reserve(group_start.size());
  for (const auto& [slot0, g] : first_seen) {
    const std::size_t k = group_start[g];
    const bool pair = k + 1 < order.size() && slots[order[k + 1]].key == slots[order[k]].key;
    Facet<Dim> f;
    f.vertices = slots[order[k]].key;
    const Slot& a = slots[order[k]];
    f.cells[0] = a.cell;
    f.local[0] = a.local;
    if (pair) {
      const Slot& b = slots[order[k + 1]];
      if (b.cell == a.cell) throw MeshError("cell repeats a facet");
      f.cells[1] = b.cell;
      f.local[1] = b.local;
      if (f.cells[1] < f.cells[0]) {
        std::swap(f.cells[0], f.cells[1]);
        std::swap(f.local[0], f.local[1]);
      }
    }
    const int id = t.num_facets();
    t.cell_facets[f.cells[0]][f.local[0]] = id;
    if (pair) {
      t.cell_facets[f.cells[1]][f.local[1]] = id;
      t.facet_adjacency[f.cells[0]][f.local[0]] = f.cells[1];
      t.facet_adjacency[f.cells[1]][f.local[1]] = f.cells[0];
    }
    t.facets.push_back(f);
  }

  t.boundary_vertex.assign(nv, 0);
  for (const auto& f : t.facets)
    if (f.is_boundary())
      for (int v : f.vertices) t.boundary_vertex[v] = 1;
  return t;
}

/// Unit square, n x n subsquares each cut along the lower-left to upper-right
/// diagonal. 2n^2 triangles.
inline Triangulation<2> build_structured_square(int n) {
  if (n < 1) throw MeshError("build_structured_square: n must be >= 1");
  std::vector<Point<2>> v;
  v.reserve(static_cast<std::size_t>(n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) v.emplace_back(double(i) / n, double(j) / n);
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<Simplex<2>> c;
  c.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int ll = id(i, j), lr = id(i + 1, j), ur = id(i + 1, j + 1), ul = id(i, j + 1);
      c.push_back({ll, lr, ur});
      c.push_back({ll, ur, ul});
    }
  return make_triangulation<2>(std::move(v), std::move(c));
}

/// Unit cube, n^3 subcubes each split into the 6 Kuhn tetrahedra around the
/// main diagonal. 6n^3 tetrahedra, conforming across subcubes.
inline Triangulation<3> build_structured_cube(int n) {
  if (n < 1) throw MeshError("build_structured_cube: n must be >= 1");
  std::vector<Point<3>> v;
  v.reserve(static_cast<std::size_t>(n + 1) * (n + 1) * (n + 1));
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) v.emplace_back(double(i) / n, double(j) / n, double(k) / n);
  auto id = [n](int i, int j, int k) { return (k * (n + 1) + j) * (n + 1) + i; };
  static constexpr std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Simplex<3>> c;
  c.reserve(6 * static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& p : perms) {
          std::array<int, 3> x{i, j, k};
          Simplex<3> s;
          s[0] = id(x[0], x[1], x[2]);
          for (int step = 0; step < 3; ++step) {
            ++x[p[step]];
            s[step + 1] = id(x[0], x[1], x[2]);
          }
          c.push_back(s);
        }
  return make_triangulation<3>(std::move(v), std::move(c));
}

// ---------------------------------------------------------------------------
// Mesh file I/O
//
// Line 1: `dim nv nc`; then nv lines of dim coordinates (17 significant
// digits); then nc lines of dim+1 zero-based vertex ids. Reading stops at the
// first line starting with '#', so split files with appended sections parse.

template <int Dim>
void write_mesh(const Triangulation<Dim>& t, std::ostream& os) {
  os << Dim << ' ' << t.num_vertices() << ' ' << t.num_cells() << '\n';
  char buf[64];
  for (const auto& p : t.vertices) {
    for (int k = 0; k < Dim; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", p[k]);
      os << (k ? " " : "") << buf;
    }
    os << '\n';
  }
  for (const auto& s : t.cells) {
    for (int k = 0; k <= Dim; ++k) os << (k ? " " : "") << s[k];
    os << '\n';
  }
}

template <int Dim>
void write_mesh(const Triangulation<Dim>& t, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_mesh(t, os);
  if (!os) throw Error("write to '" + path + "' failed");
}

namespace detail {

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;

  /// Next non-blank line; false at EOF or at a '#' section marker.
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      const auto pos = line.find_first_not_of(" \t\r");
      if (pos == std::string::npos) continue;
      if (line[pos] == '#') return false;
      return true;
    }
    return false;
  }
};

inline std::array<long long, 3> parse_header(LineReader& r) {
  std::string line;
  if (!r.next(line)) throw ParseError(r.line_no ? r.line_no : 1, "missing header");
  std::istringstream ss(line);
  long long dim, nv, nc;
  std::string extra;
  if (!(ss >> dim >> nv >> nc) || (ss >> extra))
    throw ParseError(r.line_no, "malformed header, expected `dim nv nc`");
  if (dim != 2 && dim != 3) throw ParseError(r.line_no, "dimension must be 2 or 3");
  if (nv < 0 || nc < 0) throw ParseError(r.line_no, "negative counts in header");
  return {dim, nv, nc};
}

}  // namespace detail

/// Reads only the header and returns the mesh dimension.
inline int peek_mesh_dimension(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  detail::LineReader r{in};
  return static_cast<int>(detail::parse_header(r)[0]);
}

template <int Dim>
Triangulation<Dim> read_mesh(std::istream& in) {
  detail::LineReader r{in};
  const auto [dim, nv, nc] = detail::parse_header(r);
  if (dim != Dim)
    throw ParseError(r.line_no, "mesh dimension " + std::to_string(dim) + " but expected " +
                                    std::to_string(Dim));
  std::string line;
  std::vector<Point<Dim>> verts(nv);
  for (long long i = 0; i < nv; ++i) {
    if (!r.next(line)) throw ParseError(r.line_no + 1, "missing vertex line");
    std::istringstream ss(line);
    for (int k = 0; k < Dim; ++k)
      if (!(ss >> verts[i][k]) || !std::isfinite(verts[i][k]))
        throw ParseError(r.line_no, "bad vertex coordinate");
  }
  std::vector<Simplex<Dim>> cells(nc);
  std::vector<std::size_t> cell_line(nc);
  for (long long i = 0; i < nc; ++i) {
    if (!r.next(line)) throw ParseError(r.line_no + 1, "missing cell line");
    cell_line[i] = r.line_no;
    std::istringstream ss(line);
    for (int k = 0; k <= Dim; ++k) {
      long long id;
      if (!(ss >> id)) throw ParseError(r.line_no, "bad cell index");
      if (id < 0 || id >= nv)
        throw ParseError(r.line_no, "vertex index " + std::to_string(id) + " out of range");
      cells[i][k] = static_cast<int>(id);
    }
    std::array<Point<Dim>, Dim + 1> p;
    for (int k = 0; k <= Dim; ++k) p[k] = verts[cells[i][k]];
    if (!(std::abs(signed_measure<Dim>(p)) > kGeomTol))
      throw ParseError(r.line_no, "degenerate cell");
  }
  try {
    return make_triangulation<Dim>(std::move(verts), std::move(cells));
  } catch (const MeshError& e) {
    throw ParseError(0, e.what());
  }
}

template <int Dim>
Triangulation<Dim> read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_mesh<Dim>(in);
}

}  // namespace divfree
