#pragma once

/// \file pressure_constraints.hpp
/// \brief Weakly continuous piecewise-constant pressure spaces: the
/// alternating-sum functionals around singular features, the explicit
/// +/-1 basis, and its enforcement by elementary column operations on the
/// raw divergence matrix.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "divfree/errors.hpp"
#include "divfree/sparse.hpp"
#include "divfree/split_refinement.hpp"

namespace divfree {

/// theta(q) = sum of sign * q[cell].
struct ThetaFunctional {
  int feature = -1;
  bool is_interior = false;
  std::vector<std::pair<int, int>> terms;  // (cell id, +1 / -1)

  double operator()(const Vector& q) const {
    double s = 0.0;
    for (const auto& [c, sgn] : terms) s += sgn * q[c];
    return s;
  }
};

namespace detail {

template <int Dim>
bool share_facet(const Simplex<Dim>& a, const Simplex<Dim>& b) {
  int common = 0;
  for (int v : a) common += static_cast<int>(std::count(b.begin(), b.end(), v));
  return common == Dim;
}

template <int Dim>
void check_fan(const Triangulation<Dim>& t, const std::vector<int>& fan, bool cyclic, int feature) {
  const std::size_t n = fan.size();
  for (std::size_t j = 0; j + 1 < n + (cyclic ? 1 : 0); ++j) {
    const int a = fan[j], b = fan[(j + 1) % n];
    if (!share_facet<Dim>(t.cells[a], t.cells[b]))
      throw ConstructionError("fan of singular feature " + std::to_string(feature) +
                              ": cells " + std::to_string(a) + " and " + std::to_string(b) +
                              " are not facet-adjacent");
  }
}

}  // namespace detail

/// One functional per singular vertex (2D) or singular edge (3D), interior
/// and boundary, with alternating signs along the recorded fan.
template <int Dim>
std::vector<ThetaFunctional> build_theta_functionals(const SplitMesh<Dim>& sm) {
  std::vector<ThetaFunctional> out;
  auto add = [&](int id, bool interior, const std::vector<int>& fan) {
    const std::size_t expected = interior ? 4 : 2;
    if (fan.size() != expected)
      throw ConstructionError("singular feature " + std::to_string(id) + ": fan has " +
                              std::to_string(fan.size()) + " cells");
    detail::check_fan(sm.mesh, fan, interior, id);
    ThetaFunctional th;
    th.feature = id;
    th.is_interior = interior;
    for (std::size_t j = 0; j < fan.size(); ++j) th.terms.emplace_back(fan[j], j % 2 ? -1 : 1);
    out.push_back(std::move(th));
  };
  if constexpr (Dim == 2) {
    for (std::size_t i = 0; i < sm.singular_points.size(); ++i)
      add(static_cast<int>(i), sm.singular_points[i].is_interior, sm.singular_points[i].fan);
  } else {
    for (std::size_t i = 0; i < sm.singular_edges.size(); ++i)
      add(static_cast<int>(i), sm.singular_edges[i].is_interior, sm.singular_edges[i].fan);
  }
  return out;
}

/// The three singular-edge constraints of interior face split point `z`,
/// as a 3x6 matrix over K_z^(1..6). Row j comes from the edge shared by
/// K_z^(j) and K_z^(j+1), signed so its K_z^(j) entry is +1.
inline Eigen::Matrix<double, 3, 6> local_constraint_matrix_3d(const SplitMesh<3>& sm, int z) {
  if (z < 0 || z >= sm.num_groups()) throw Error("local_constraint_matrix_3d: bad split point");
  if (!sm.group_interior[z])
    throw Error("local_constraint_matrix_3d: boundary split point has a single constraint form");
  Eigen::Matrix<double, 3, 6> C = Eigen::Matrix<double, 3, 6>::Zero();
  const int base = sm.group_offsets[z];
  for (int j = 0; j < 3; ++j) {
    const auto& e = sm.singular_edges[3 * z + j];
    if (e.coarse_facet != z) throw ConstructionError("singular edge bookkeeping mismatch");
    for (std::size_t k = 0; k < e.fan.size(); ++k) {
      const int local = e.fan[k] - base;
      if (local < 0 || local >= 6) throw ConstructionError("singular edge fan leaves its group");
      C(j, local) = k % 2 ? -1.0 : 1.0;
    }
    if (C(j, j) < 0) C.row(j) *= -1.0;
  }
  return C;
}

/// Z maps reduced (psi-basis) coefficients to raw per-cell coefficients.
struct ConstraintTransform {
  int dim = 0;
  SparseMatrix Z;
  std::vector<int> kept_raw;     // raw column kept for each reduced column
  std::vector<int> deleted_raw;  // raw columns removed after the column operations
  std::vector<int> column_group;
  std::vector<int> group_offsets;
  std::vector<char> group_interior;

  int num_raw() const { return static_cast<int>(Z.rows()); }
  int num_reduced() const { return static_cast<int>(Z.cols()); }
  Vector expand(const Vector& reduced) const { return Z * reduced; }
};

namespace detail {

template <int Dim>
ConstraintTransform transform_skeleton(const SplitMesh<Dim>& sm) {
  ConstraintTransform ct;
  ct.dim = Dim;
  ct.group_offsets = sm.group_offsets;
  ct.group_interior = sm.group_interior;
  return ct;
}

inline void finish_transform(ConstraintTransform& ct, int m_raw, std::vector<Triplet>& trip) {
  ct.Z.resize(m_raw, static_cast<int>(ct.kept_raw.size()));
  ct.Z.setFromTriplets(trip.begin(), trip.end());
}

}  // namespace detail

/// psi_z^(j) = phi_z^(j) + (-1)^j phi_z^(1), j = 2..n_z, for every singular
/// vertex (interior and boundary).
inline ConstraintTransform build_constraint_transform_2d(const SplitMesh<2>& sm) {
  ++Instrumentation::transforms_2d;
  auto ct = detail::transform_skeleton(sm);
  std::vector<Triplet> trip;
  for (int z = 0; z < sm.num_groups(); ++z) {
    const int first = sm.sigma(z, 1);
    ct.deleted_raw.push_back(first);
    for (int j = 2; j <= sm.group_size(z); ++j) {
      const int col = static_cast<int>(ct.kept_raw.size());
      trip.emplace_back(sm.sigma(z, j), col, 1.0);
      trip.emplace_back(first, col, j % 2 ? -1.0 : 1.0);
      ct.kept_raw.push_back(sm.sigma(z, j));
      ct.column_group.push_back(z);
    }
  }
  detail::finish_transform(ct, sm.mesh.num_cells(), trip);
  return ct;
}

/// Interior face split point: psi^(3) = phi^(3) + phi^(1) + phi^(2),
/// psi^(4) = phi^(4) + phi^(1), psi^(5) = phi^(5) + phi^(2),
/// psi^(6) = phi^(6) - phi^(1) - phi^(2). Boundary: psi^(3) only.
inline ConstraintTransform build_constraint_transform_3d(const SplitMesh<3>& sm) {
  ++Instrumentation::transforms_3d;
  auto ct = detail::transform_skeleton(sm);
  std::vector<Triplet> trip;
  auto column = [&](int z, int j, std::initializer_list<std::pair<int, double>> extra) {
    const int col = static_cast<int>(ct.kept_raw.size());
    trip.emplace_back(sm.sigma(z, j), col, 1.0);
    for (const auto& [k, s] : extra) trip.emplace_back(sm.sigma(z, k), col, s);
    ct.kept_raw.push_back(sm.sigma(z, j));
    ct.column_group.push_back(z);
  };
  for (int z = 0; z < sm.num_groups(); ++z) {
    ct.deleted_raw.push_back(sm.sigma(z, 1));
    ct.deleted_raw.push_back(sm.sigma(z, 2));
    column(z, 3, {{1, 1.0}, {2, 1.0}});
    if (sm.group_interior[z]) {
      column(z, 4, {{1, 1.0}});
      column(z, 5, {{2, 1.0}});
      column(z, 6, {{1, -1.0}, {2, -1.0}});
    }
  }
  detail::finish_transform(ct, sm.mesh.num_cells(), trip);
  return ct;
}

template <int Dim>
ConstraintTransform build_constraint_transform(const SplitMesh<Dim>& sm) {
  if constexpr (Dim == 2)
    return build_constraint_transform_2d(sm);
  else
    return build_constraint_transform_3d(sm);
}

namespace detail {

inline SparseMatrix drop_exact_zeros(SparseMatrix m) {
  m.prune([](int, int, double v) { return v != 0.0; });
  return m;
}

}  // namespace detail

/// B = Btilde * Z by in-place elementary column operations on Btilde followed
/// by deletion of the sigma(z, 1) (and, in 3D, sigma(z, 2)) columns.
inline SparseMatrix apply_column_operations(const SparseMatrix& Btilde,
                                            const ConstraintTransform& ct) {
  if (Btilde.cols() != ct.num_raw())
    throw Error("apply_column_operations: matrix has " + std::to_string(Btilde.cols()) +
                " columns but the transform expects " + std::to_string(ct.num_raw()));
  if (ct.group_offsets.empty() || ct.group_offsets.back() != ct.num_raw())
    throw Error("apply_column_operations: transform does not match the mesh");

  const ColMatrix Bc(Btilde);
  std::vector<Eigen::SparseVector<double>> col(Bc.cols());
  for (int k = 0; k < Bc.cols(); ++k) col[k] = Bc.col(k);

  const int groups = static_cast<int>(ct.group_offsets.size()) - 1;
  auto sigma = [&](int z, int j) { return ct.group_offsets[z] + j - 1; };
  for (int z = 0; z < groups; ++z) {
    const int nz = ct.group_offsets[z + 1] - ct.group_offsets[z];
    if (ct.dim == 2) {
      const auto& c1 = col[sigma(z, 1)];
      for (int j = 2; j <= nz; ++j) {
        auto& cj = col[sigma(z, j)];
        if (j % 2 == 0)
          cj += c1;
        else
          cj -= c1;
      }
    } else {
      const auto c1 = col[sigma(z, 1)];
      const auto c2 = col[sigma(z, 2)];
      col[sigma(z, 3)] += c1;
      col[sigma(z, 3)] += c2;
      if (ct.group_interior[z]) {
        col[sigma(z, 4)] += c1;
        col[sigma(z, 5)] += c2;
        col[sigma(z, 6)] -= c1;
        col[sigma(z, 6)] -= c2;
      }
    }
  }

  std::vector<Triplet> trip;
  for (std::size_t r = 0; r < ct.kept_raw.size(); ++r)
    for (Eigen::SparseVector<double>::InnerIterator it(col[ct.kept_raw[r]]); it; ++it)
      trip.emplace_back(static_cast<int>(it.index()), static_cast<int>(r), it.value());
  SparseMatrix B(Btilde.rows(), ct.num_reduced());
  B.setFromTriplets(trip.begin(), trip.end());
  return detail::drop_exact_zeros(std::move(B));
}

/// Reference path: the sparse product Btilde * Z.
inline SparseMatrix constrained_divergence_by_product(const SparseMatrix& Btilde,
                                                      const ConstraintTransform& ct) {
  if (Btilde.cols() != ct.num_raw()) throw Error("constrained_divergence_by_product: size mismatch");
  SparseMatrix B = Btilde * ct.Z;
  return detail::drop_exact_zeros(std::move(B));
}

/// Integrals of the psi basis functions: Z^T (cell measures).
inline Vector psi_integrals(const ConstraintTransform& ct, const Vector& measures) {
  return ct.Z.transpose() * measures;
}

/// psi-basis mass matrix Z^T M_p Z.
inline SparseMatrix reduced_pressure_mass(const ConstraintTransform& ct, const Vector& measures) {
  SparseMatrix D(measures.size(), measures.size());
  D.reserve(Eigen::VectorXi::Ones(measures.size()));
  for (int i = 0; i < measures.size(); ++i) D.insert(i, i) = measures[i];
  const SparseMatrix ZT = ct.Z.transpose();
  return SparseMatrix(ZT * D * ct.Z);
}

}  // namespace divfree
