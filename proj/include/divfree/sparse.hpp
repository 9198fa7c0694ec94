#pragma once

/// \file sparse.hpp
/// \brief Row-compressed sparse matrix type and coordinate-format dumps.

#include <cstdio>
#include <fstream>
#include <string>

#include <Eigen/Sparse>

#include "divfree/errors.hpp"

namespace divfree {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double, int>;

/// Writes `row col value` lines (zero-based), preceded by a `rows cols nnz`
/// line.
template <class Mat>
void write_coordinate(const Mat& m, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw Error("cannot open '" + path + "' for writing");
  std::fprintf(fp, "%ld %ld %ld\n", static_cast<long>(m.rows()), static_cast<long>(m.cols()),
               static_cast<long>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k)
    for (typename Mat::InnerIterator it(m, k); it; ++it)
      std::fprintf(fp, "%ld %ld %.17g\n", static_cast<long>(it.row()),
                   static_cast<long>(it.col()), it.value());
  std::fclose(fp);
}

/// Largest |a_ij - b_ij| over the union of both patterns.
template <class MatA, class MatB>
double max_abs_difference(const MatA& a, const MatB& b) {
  const SparseMatrix d = SparseMatrix(a) - SparseMatrix(b);
  double m = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

}  // namespace divfree
