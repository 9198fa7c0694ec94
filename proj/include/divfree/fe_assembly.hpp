#pragma once

/// \file fe_assembly.hpp
/// \brief Continuous P1 vector velocity / P0 pressure assembly on simplicial
/// meshes, plus the error norms used by the convergence studies.
///
/// Velocity dofs live on interior vertices only (homogeneous Dirichlet data
/// is eliminated); dof `Dim * f + c` is component c at the f-th free vertex.
/// Raw pressure dofs are the cells, in cell-id order.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "divfree/errors.hpp"
#include "divfree/geometry_mesh.hpp"
#include "divfree/manufactured.hpp"
#include "divfree/quadrature.hpp"
#include "divfree/sparse.hpp"

namespace divfree {

template <int Dim>
struct DofMap {
  std::vector<int> vertex_free;  // free-vertex index, or -1 on the boundary
  std::vector<int> free_vertex;
  int num_pressure = 0;

  int num_free_vertices() const { return static_cast<int>(free_vertex.size()); }
  int num_velocity() const { return Dim * num_free_vertices(); }
  /// Global dof of component `comp` at vertex `v`, -1 for Dirichlet vertices.
  int velocity_dof(int v, int comp) const {
    const int f = vertex_free[v];
    return f < 0 ? -1 : Dim * f + comp;
  }
};

template <int Dim>
DofMap<Dim> build_dofmap(const Triangulation<Dim>& t) {
  DofMap<Dim> d;
  d.vertex_free.assign(t.num_vertices(), -1);
  for (int v = 0; v < t.num_vertices(); ++v)
    if (!t.boundary_vertex[v]) {
      d.vertex_free[v] = d.num_free_vertices();
      d.free_vertex.push_back(v);
    }
  d.num_pressure = t.num_cells();
  return d;
}

/// Measure and barycentric-coordinate gradients (row k = grad lambda_k).
template <int Dim>
struct CellGeometry {
  double measure = 0.0;
  Eigen::Matrix<double, Dim + 1, Dim> grads;
};

template <int Dim>
CellGeometry<Dim> cell_geometry(const Triangulation<Dim>& t, int c) {
  const auto p = cell_points(t, c);
  Eigen::Matrix<double, Dim, Dim> J;
  for (int k = 0; k < Dim; ++k) J.col(k) = p[k + 1] - p[0];
  const double det = J.determinant();
  if (!(std::abs(det) > kGeomTol)) throw MeshError("assembly: degenerate cell " + std::to_string(c));
  CellGeometry<Dim> g;
  g.measure = std::abs(det) / factorial_dim<Dim>();
  const Eigen::Matrix<double, Dim, Dim> Jinv = J.inverse();
  g.grads.template bottomRows<Dim>() = Jinv;
  g.grads.row(0) = -Jinv.colwise().sum();
  return g;
}

/// Maps a reference rule onto cell c: physical points and weights.
template <int Dim>
void map_rule(const Triangulation<Dim>& t, int c, double measure, const QuadratureRule<Dim>& q,
              std::vector<Point<Dim>>& x, std::vector<double>& w) {
  const auto p = cell_points(t, c);
  x.resize(q.size());
  w.resize(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    Point<Dim> y = Point<Dim>::Zero();
    for (int k = 0; k <= Dim; ++k) y += q.points[i][k] * p[k];
    x[i] = y;
    w[i] = q.weights[i] * measure * factorial_dim<Dim>();
  }
}

/// A(i, j) = nu * integral grad(phi_j) : grad(phi_i) over free velocity dofs.
template <int Dim>
SparseMatrix assemble_stiffness(const Triangulation<Dim>& t, const DofMap<Dim>& dofs, double nu) {
  if (!(nu > 0)) throw Error("assemble_stiffness: viscosity must be positive");
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(t.num_cells()) * (Dim + 1) * (Dim + 1) * Dim);
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    for (int a = 0; a <= Dim; ++a)
      for (int b = 0; b <= Dim; ++b) {
        const double k = nu * g.measure * g.grads.row(a).dot(g.grads.row(b));
        for (int comp = 0; comp < Dim; ++comp) {
          const int i = dofs.velocity_dof(t.cells[c][a], comp);
          const int j = dofs.velocity_dof(t.cells[c][b], comp);
          if (i >= 0 && j >= 0) trip.emplace_back(i, j, k);
        }
      }
  }
  SparseMatrix A(dofs.num_velocity(), dofs.num_velocity());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Vector P1 mass matrix over free velocity dofs:
/// integral lambda_a lambda_b = |K| (1 + delta_ab) / ((d + 1)(d + 2)).
template <int Dim>
SparseMatrix assemble_velocity_mass(const Triangulation<Dim>& t, const DofMap<Dim>& dofs) {
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(t.num_cells()) * (Dim + 1) * (Dim + 1) * Dim);
  constexpr double denom = (Dim + 1) * (Dim + 2);
  for (int c = 0; c < t.num_cells(); ++c) {
    const double meas = cell_geometry(t, c).measure;
    for (int a = 0; a <= Dim; ++a)
      for (int b = 0; b <= Dim; ++b)
        for (int comp = 0; comp < Dim; ++comp) {
          const int i = dofs.velocity_dof(t.cells[c][a], comp);
          const int j = dofs.velocity_dof(t.cells[c][b], comp);
          if (i >= 0 && j >= 0) trip.emplace_back(i, j, meas * (a == b ? 2.0 : 1.0) / denom);
        }
  }
  SparseMatrix M(dofs.num_velocity(), dofs.num_velocity());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// Btilde(i, K) = -integral_K div(phi_i), against the raw P0 basis.
template <int Dim>
SparseMatrix assemble_divergence(const Triangulation<Dim>& t, const DofMap<Dim>& dofs) {
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(t.num_cells()) * (Dim + 1) * Dim);
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    for (int a = 0; a <= Dim; ++a)
      for (int comp = 0; comp < Dim; ++comp) {
        const int i = dofs.velocity_dof(t.cells[c][a], comp);
        if (i >= 0) trip.emplace_back(i, c, -g.measure * g.grads(a, comp));
      }
  }
  SparseMatrix B(dofs.num_velocity(), t.num_cells());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

/// Cell measures, i.e. the diagonal of the P0 mass matrix.
template <int Dim>
Vector cell_measures(const Triangulation<Dim>& t) {
  Vector m(t.num_cells());
  for (int c = 0; c < t.num_cells(); ++c) m[c] = cell_geometry(t, c).measure;
  return m;
}

template <int Dim>
SparseMatrix assemble_pressure_mass(const Triangulation<Dim>& t) {
  const Vector m = cell_measures(t);
  SparseMatrix M(t.num_cells(), t.num_cells());
  M.reserve(Eigen::VectorXi::Ones(t.num_cells()));
  for (int c = 0; c < t.num_cells(); ++c) M.insert(c, c) = m[c];
  M.makeCompressed();
  return M;
}

/// Load vector integral f . phi_i by quadrature.
template <int Dim>
Vector assemble_load(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                     const std::function<Point<Dim>(const Point<Dim>&)>& f,
                     int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  Vector F = Vector::Zero(dofs.num_velocity());
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  for (int c = 0; c < t.num_cells(); ++c) {
    const double meas = cell_geometry(t, c).measure;
    map_rule(t, c, meas, q, x, w);
    for (std::size_t i = 0; i < q.size(); ++i) {
      const Point<Dim> fx = f(x[i]);
      for (int a = 0; a <= Dim; ++a)
        for (int comp = 0; comp < Dim; ++comp) {
          const int dof = dofs.velocity_dof(t.cells[c][a], comp);
          if (dof >= 0) F[dof] += w[i] * q.points[i][a] * fx[comp];
        }
    }
  }
  return F;
}

template <int Dim>
Vector assemble_load(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                     const ManufacturedSolution<Dim>& ms, int degree = kDefaultQuadratureDegree) {
  return assemble_load<Dim>(t, dofs, ms.f, degree);
}

/// r_i = integral grad(u) : grad(phi_i), the right-hand side of the H1
/// seminorm projection.
template <int Dim>
Vector assemble_gradient_load(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                              const ManufacturedSolution<Dim>& ms,
                              int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  Vector r = Vector::Zero(dofs.num_velocity());
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    map_rule(t, c, g.measure, q, x, w);
    Eigen::Matrix<double, Dim, Dim> G = Eigen::Matrix<double, Dim, Dim>::Zero();
    for (std::size_t i = 0; i < q.size(); ++i) G += w[i] * ms.grad_u(x[i]);
    for (int a = 0; a <= Dim; ++a)
      for (int comp = 0; comp < Dim; ++comp) {
        const int dof = dofs.velocity_dof(t.cells[c][a], comp);
        if (dof >= 0) r[dof] += G.row(comp).dot(g.grads.row(a));
      }
  }
  return r;
}

/// Nodal interpolant of `u` at the free vertices.
template <int Dim>
Vector interpolate(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                   const std::function<Point<Dim>(const Point<Dim>&)>& u) {
  Vector c(dofs.num_velocity());
  for (int f = 0; f < dofs.num_free_vertices(); ++f) {
    const Point<Dim> val = u(t.vertices[dofs.free_vertex[f]]);
    for (int comp = 0; comp < Dim; ++comp) c[Dim * f + comp] = val[comp];
  }
  return c;
}

/// Per-cell divergence of the velocity field with coefficients `coeffs`.
template <int Dim>
Vector divergence_per_cell(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                           const Vector& coeffs) {
  Vector d = Vector::Zero(t.num_cells());
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    for (int a = 0; a <= Dim; ++a)
      for (int comp = 0; comp < Dim; ++comp) {
        const int dof = dofs.velocity_dof(t.cells[c][a], comp);
        if (dof >= 0) d[c] += coeffs[dof] * g.grads(a, comp);
      }
  }
  return d;
}

/// Velocity gradient on cell c.
template <int Dim>
Eigen::Matrix<double, Dim, Dim> cell_gradient(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                                              const CellGeometry<Dim>& g, int c,
                                              const Vector& coeffs) {
  Eigen::Matrix<double, Dim, Dim> G = Eigen::Matrix<double, Dim, Dim>::Zero();
  for (int a = 0; a <= Dim; ++a)
    for (int comp = 0; comp < Dim; ++comp) {
      const int dof = dofs.velocity_dof(t.cells[c][a], comp);
      if (dof >= 0) G.row(comp) += coeffs[dof] * g.grads.row(a);
    }
  return G;
}

/// Cell averages of a scalar function.
template <int Dim>
Vector cell_averages(const Triangulation<Dim>& t, const std::function<double(const Point<Dim>&)>& p,
                     int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  Vector avg(t.num_cells());
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  for (int c = 0; c < t.num_cells(); ++c) {
    const double meas = cell_geometry(t, c).measure;
    map_rule(t, c, meas, q, x, w);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += w[i] * p(x[i]);
    avg[c] = s / meas;
  }
  return avg;
}

struct ErrorNorms {
  double l2_velocity = 0.0;
  double h1_seminorm_velocity = 0.0;
  double l2_pressure = 0.0;
  double l2_divergence = 0.0;
};

/// Errors of (u_h, p_h) against the exact solution. `pressure_cells` holds the
/// piecewise-constant pressure per cell; the pressure error is measured after
/// removing the mean of p - p_h.
template <int Dim>
ErrorNorms error_norms(const Triangulation<Dim>& t, const DofMap<Dim>& dofs, const Vector& coeffs,
                       const Vector& pressure_cells, const ManufacturedSolution<Dim>& ms,
                       int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  ErrorNorms e;
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  double mean = 0.0, vol = 0.0;
  std::vector<double> pdiff;  // (p - p_h) at every quadrature point, cell-major
  pdiff.reserve(static_cast<std::size_t>(t.num_cells()) * q.size());
  std::vector<double> pw;
  pw.reserve(pdiff.capacity());
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    map_rule(t, c, g.measure, q, x, w);
    const auto Gh = cell_gradient(t, dofs, g, c, coeffs);
    double div = Gh.trace();
    e.l2_divergence += g.measure * div * div;
    for (std::size_t i = 0; i < q.size(); ++i) {
      Point<Dim> uh = Point<Dim>::Zero();
      for (int a = 0; a <= Dim; ++a)
        for (int comp = 0; comp < Dim; ++comp) {
          const int dof = dofs.velocity_dof(t.cells[c][a], comp);
          if (dof >= 0) uh[comp] += coeffs[dof] * q.points[i][a];
        }
      e.l2_velocity += w[i] * (ms.u(x[i]) - uh).squaredNorm();
      e.h1_seminorm_velocity += w[i] * (ms.grad_u(x[i]) - Gh).squaredNorm();
      const double d = ms.p(x[i]) - pressure_cells[c];
      pdiff.push_back(d);
      pw.push_back(w[i]);
      mean += w[i] * d;
      vol += w[i];
    }
  }
  mean /= vol;
  for (std::size_t k = 0; k < pdiff.size(); ++k) e.l2_pressure += pw[k] * (pdiff[k] - mean) * (pdiff[k] - mean);
  e.l2_velocity = std::sqrt(e.l2_velocity);
  e.h1_seminorm_velocity = std::sqrt(e.h1_seminorm_velocity);
  e.l2_pressure = std::sqrt(e.l2_pressure);
  e.l2_divergence = std::sqrt(e.l2_divergence);
  return e;
}

/// Mean-corrected L2 distance between p and a piecewise-constant field.
template <int Dim>
double l2_pressure_distance(const Triangulation<Dim>& t,
                            const std::function<double(const Point<Dim>&)>& p,
                            const Vector& pressure_cells, int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  double vol = 0.0, mean = 0.0;
  std::vector<double> d, dw;
  for (int c = 0; c < t.num_cells(); ++c) {
    const double meas = cell_geometry(t, c).measure;
    map_rule(t, c, meas, q, x, w);
    for (std::size_t i = 0; i < q.size(); ++i) {
      d.push_back(p(x[i]) - pressure_cells[c]);
      dw.push_back(w[i]);
      vol += w[i];
      mean += w[i] * d.back();
    }
  }
  mean /= vol;
  double s = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) s += dw[k] * (d[k] - mean) * (d[k] - mean);
  return std::sqrt(s);
}

/// |u - v_h|_{H1} for velocity coefficients `coeffs`.
template <int Dim>
double h1_seminorm_error(const Triangulation<Dim>& t, const DofMap<Dim>& dofs, const Vector& coeffs,
                         const ManufacturedSolution<Dim>& ms,
                         int degree = kDefaultQuadratureDegree) {
  const auto q = simplex_rule<Dim>(degree);
  std::vector<Point<Dim>> x;
  std::vector<double> w;
  double s = 0.0;
  for (int c = 0; c < t.num_cells(); ++c) {
    const auto g = cell_geometry(t, c);
    map_rule(t, c, g.measure, q, x, w);
    const auto Gh = cell_gradient(t, dofs, g, c, coeffs);
    for (std::size_t i = 0; i < q.size(); ++i) s += w[i] * (ms.grad_u(x[i]) - Gh).squaredNorm();
  }
  return std::sqrt(s);
}

}  // namespace divfree
