#pragma once

/// \file stokes_solvers.hpp
/// \brief Solvers for the mean-constrained saddle system
///
///     [ A   B  0 ] [u]   [f]
///     [ B^T 0  m ] [p] = [0]
///     [ 0  m^T 0 ] [l]   [0]
///
/// where m holds the integrals of the pressure basis functions, so the single
/// multiplier l enforces a mean-zero pressure. Also: the iterated penalty
/// method, the discrete inf-sup constant, and best-approximation errors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "divfree/errors.hpp"
#include "divfree/fe_assembly.hpp"
#include "divfree/pressure_constraints.hpp"
#include "divfree/sparse.hpp"

namespace divfree {

struct SaddleSystem {
  SparseMatrix A;  // N x N, SPD
  SparseMatrix B;  // N x M
  Vector mean_row; // length M
  Vector rhs;      // length N

  int num_velocity() const { return static_cast<int>(A.rows()); }
  int num_pressure() const { return static_cast<int>(B.cols()); }
  int size() const { return num_velocity() + num_pressure() + 1; }
};

struct SolverDiagnostics {
  std::string method;
  int iterations = 0;
  double residual = 0.0;  // final 2-norm of the augmented residual
  std::vector<double> residual_history;
};

struct Solution {
  Vector velocity;
  Vector pressure;  // coefficients in the basis the system was built with
  double multiplier = 0.0;
  SolverDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// Augmented operator

inline ColMatrix augmented_matrix(const SaddleSystem& s) {
  const int n = s.num_velocity(), m = s.num_pressure();
  std::vector<Triplet> t;
  t.reserve(s.A.nonZeros() + 2 * s.B.nonZeros() + 2 * m);
  for (int r = 0; r < s.A.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(s.A, r); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < s.B.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(s.B, r); it; ++it) {
      t.emplace_back(it.row(), n + it.col(), it.value());
      t.emplace_back(n + it.col(), it.row(), it.value());
    }
  for (int k = 0; k < m; ++k) {
    t.emplace_back(n + k, n + m, s.mean_row[k]);
    t.emplace_back(n + m, n + k, s.mean_row[k]);
  }
  ColMatrix K(s.size(), s.size());
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

inline Vector apply_augmented(const SaddleSystem& s, const Vector& x) {
  const int n = s.num_velocity(), m = s.num_pressure();
  Vector y(s.size());
  const auto u = x.head(n);
  const auto p = x.segment(n, m);
  const double l = x[n + m];
  y.head(n) = s.A * u + s.B * p;
  y.segment(n, m) = s.B.transpose() * u + s.mean_row * l;
  y[n + m] = s.mean_row.dot(p);
  return y;
}

inline Vector augmented_rhs(const SaddleSystem& s) {
  Vector b = Vector::Zero(s.size());
  b.head(s.num_velocity()) = s.rhs;
  return b;
}

inline Solution unpack(const SaddleSystem& s, const Vector& x) {
  Solution sol;
  sol.velocity = x.head(s.num_velocity());
  sol.pressure = x.segment(s.num_velocity(), s.num_pressure());
  sol.multiplier = x[s.size() - 1];
  return sol;
}

/// Factorization of the augmented matrix. The dense multiplier row would
/// ruin the fill-reducing ordering, so the sparse matrix
/// K1 = [[A, B], [B^T, delta e_k e_k^T]] is factored instead (nonsingular
/// when the constant pressure mode is the only kernel of B) and the exact
/// bordered solution is recovered through a 2x2 Schur complement.
class SaddleFactorization {
 public:
  /// Relative residual above which a solve is treated as singular.
  static constexpr double kSingularResidual = 1e-6;

  explicit SaddleFactorization(const SaddleSystem& s)
      : sys_(&s), n_(s.num_velocity()), m_(s.num_pressure()) {
    double bmax = 0.0;
    for (int r = 0; r < s.B.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(s.B, r); it; ++it) bmax = std::max(bmax, std::abs(it.value()));
    const double amax = s.A.diagonal().cwiseAbs().maxCoeff();
    delta_ = amax > 0 && bmax > 0 ? bmax * bmax / amax : 1.0;
    k_ = n_ + m_ - 1;

    std::vector<Triplet> t;
    t.reserve(s.A.nonZeros() + 2 * s.B.nonZeros() + 1);
    for (int r = 0; r < s.A.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(s.A, r); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int r = 0; r < s.B.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(s.B, r); it; ++it) {
        t.emplace_back(it.row(), n_ + it.col(), it.value());
        t.emplace_back(n_ + it.col(), it.row(), it.value());
      }
    t.emplace_back(k_, k_, delta_);
    K1_.resize(n_ + m_, n_ + m_);
    K1_.setFromTriplets(t.begin(), t.end());
    lu_.analyzePattern(K1_);
    lu_.factorize(K1_);
    ok_ = lu_.info() == Eigen::Success;
    if (!ok_) return;

    // Border columns E = [-e_k, e_m] and the Schur complement
    // S2 = diag(1/delta, 0) - E^T K1^-1 E.
    E_ = Eigen::MatrixXd::Zero(n_ + m_, 2);
    E_(k_, 0) = -1.0;
    E_.col(1).tail(m_) = s.mean_row;
    Y_ = lu_.solve(E_);
    Eigen::Matrix2d S2 = -E_.transpose() * Y_;
    S2(0, 0) += 1.0 / delta_;
    s2_ = S2.fullPivLu();
    ok_ = Y_.allFinite() && s2_.isInvertible();
  }

  bool factorized() const { return ok_; }

  /// Solves the augmented system with up to `refinements` steps of iterative
  /// refinement; the achieved relative residual goes to `rel_residual`.
  Vector solve(const Vector& b, double& rel_residual, int refinements = 2) const {
    Vector x = solve_once(b);
    const double bn = std::max(b.norm(), std::numeric_limits<double>::min());
    Vector r = b - apply_augmented(*sys_, x);
    for (int k = 0; k < refinements && r.norm() > 1e-14 * bn; ++k) {
      x += solve_once(r);
      r = b - apply_augmented(*sys_, x);
    }
    rel_residual = b.norm() > 0 ? r.norm() / bn : r.norm();
    if (!x.allFinite()) rel_residual = std::numeric_limits<double>::infinity();
    return x;
  }

 private:
  Vector solve_once(const Vector& b) const {
    const Vector g = b.head(n_ + m_);
    const Vector y = lu_.solve(g);
    Eigen::Vector2d rhs(0.0, b[n_ + m_]);
    rhs -= E_.transpose() * y;
    const Eigen::Vector2d ml = s2_.solve(rhs);  // (delta x_k, multiplier)
    Vector x(n_ + m_ + 1);
    x.head(n_ + m_) = y - Y_ * ml;
    x[n_ + m_] = ml[1];
    return x;
  }

  const SaddleSystem* sys_;
  int n_, m_, k_;
  double delta_ = 1.0;
  ColMatrix K1_;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu_;
  Eigen::MatrixXd E_, Y_;
  Eigen::FullPivLU<Eigen::Matrix2d> s2_;
  bool ok_ = false;
};

namespace detail {

/// Names the block responsible for a singular augmented matrix.
[[noreturn]] inline void throw_singular(const SaddleSystem& s, const std::string& why) {
  Eigen::SimplicialLLT<ColMatrix> llt(ColMatrix(s.A));
  if (llt.info() != Eigen::Success)
    throw SingularSystemError("velocity", why + ": stiffness block is not positive definite");
  throw SingularSystemError(
      "pressure", why + ": divergence block is rank deficient (spurious pressure modes)");
}

}  // namespace detail

/// Sparse direct solve. The relative residual of the augmented system must
/// reach 1e-10; a zero pivot or a failed residual check raises
/// SingularSystemError naming the offending block.
inline Solution solve_direct(const SaddleSystem& s) {
  if (s.B.rows() != s.A.rows() || s.mean_row.size() != s.B.cols() || s.rhs.size() != s.A.rows())
    throw Error("solve_direct: inconsistent system sizes");
  SaddleFactorization f(s);
  if (!f.factorized()) detail::throw_singular(s, "sparse LU hit a zero pivot");
  const Vector b = augmented_rhs(s);
  double rel = 0.0;
  const Vector x = f.solve(b, rel);
  if (!(rel <= 1e-10)) detail::throw_singular(s, "augmented residual " + std::to_string(rel));
  // A consistent right-hand side can hide a singular matrix; probe with a
  // generic one.
  {
    Vector probe(s.size());
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < probe.size(); ++i) probe[i] = u(gen);
    double prel = 0.0;
    f.solve(probe, prel);
    if (!(prel <= SaddleFactorization::kSingularResidual))
      detail::throw_singular(s, "probe residual " + std::to_string(prel));
  }
  Solution sol = unpack(s, x);
  sol.diagnostics.method = "direct";
  sol.diagnostics.iterations = 1;
  sol.diagnostics.residual = rel * std::max(b.norm(), 0.0);
  sol.diagnostics.residual_history = {sol.diagnostics.residual};
  return sol;
}

// ---------------------------------------------------------------------------
// Block-preconditioned flexible GMRES

struct KrylovConfig {
  double tol = 1e-8;  // absolute 2-norm of the augmented residual
  int max_iterations = 1000;
  int restart = 200;
  double inner_tol = 1e-2;      // relative tolerance of the inner A solve
  int inner_max_iterations = 100;
};

/// blockdiag(A^-1 approx, Schur^-1) with A^-1 approximated by IC(0)-PCG with
/// a capped iteration count and the pressure/multiplier Schur complement
/// approximated by [[-B^T diag(A)^-1 B, m], [m^T, 0]], factored exactly.
class BlockPreconditioner {
 public:
  BlockPreconditioner(const SaddleSystem& s, const KrylovConfig& cfg) : s_(&s), A_(s.A) {
    cg_.setMaxIterations(cfg.inner_max_iterations);
    cg_.setTolerance(cfg.inner_tol);
    cg_.compute(A_);
    if (cg_.info() != Eigen::Success) throw SingularSystemError("velocity", "IC(0) failed on A");

    const Vector dinv = s.A.diagonal().cwiseInverse();
    const SparseMatrix Bt = s.B.transpose();
    const SparseMatrix S = Bt * dinv.asDiagonal() * s.B;
    const int m = s.num_pressure();
    std::vector<Triplet> t;
    t.reserve(S.nonZeros() + 2 * m);
    for (int r = 0; r < S.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(S, r); it; ++it) t.emplace_back(it.row(), it.col(), -it.value());
    for (int k = 0; k < m; ++k) {
      t.emplace_back(k, m, s.mean_row[k]);
      t.emplace_back(m, k, s.mean_row[k]);
    }
    ColMatrix P(m + 1, m + 1);
    P.setFromTriplets(t.begin(), t.end());
    schur_.analyzePattern(P);
    schur_.factorize(P);
    if (schur_.info() != Eigen::Success)
      throw SingularSystemError("pressure", "Schur approximation is singular");
  }

  Vector apply(const Vector& r) const {
    const int n = s_->num_velocity(), m = s_->num_pressure();
    Vector z(r.size());
    z.head(n) = cg_.solve(r.head(n));
    z.tail(m + 1) = schur_.solve(r.tail(m + 1));
    return z;
  }

 private:
  const SaddleSystem* s_;
  ColMatrix A_;  // the CG solver keeps a reference
  Eigen::ConjugateGradient<ColMatrix, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>>
      cg_;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> schur_;
};

/// Restarted flexible GMRES on the augmented system. Throws
/// ConvergenceError (carrying the residual history) after max_iterations.
inline Solution solve_block_preconditioned(const SaddleSystem& s, const KrylovConfig& cfg = {}) {
  const int dim = s.size();
  const Vector b = augmented_rhs(s);
  Vector x = Vector::Zero(dim);
  Solution sol;
  std::vector<double> hist;

  double beta = b.norm();
  hist.push_back(beta);
  if (beta <= cfg.tol) {
    sol = unpack(s, x);
    sol.diagnostics.method = "fgmres";
    sol.diagnostics.residual = beta;
    sol.diagnostics.residual_history = {beta};
    return sol;
  }
  const BlockPreconditioner prec(s, cfg);
  const int m = std::max(1, cfg.restart);
  int total = 0;
  Vector r = b;
  while (total < cfg.max_iterations) {
    std::vector<Vector> V, Z;
    V.reserve(m + 1);
    Z.reserve(m);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    Vector cs = Vector::Zero(m), sn = Vector::Zero(m), g = Vector::Zero(m + 1);
    g[0] = beta;
    V.push_back(r / beta);
    int j = 0;
    double res = beta;
    for (; j < m && total < cfg.max_iterations; ++j) {
      Z.push_back(prec.apply(V[j]));
      Vector w = apply_augmented(s, Z[j]);
      for (int i = 0; i <= j; ++i) {  // modified Gram-Schmidt
        H(i, j) = w.dot(V[i]);
        w -= H(i, j) * V[i];
      }
      const double hnext = w.norm();
      H(j + 1, j) = hnext;
      for (int i = 0; i < j; ++i) {
        const double tmp = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = tmp;
      }
      const double rr = std::hypot(H(j, j), H(j + 1, j));
      cs[j] = rr > 0 ? H(j, j) / rr : 1.0;
      sn[j] = rr > 0 ? H(j + 1, j) / rr : 0.0;
      H(j, j) = rr;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      res = std::abs(g[j + 1]);
      ++total;
      hist.push_back(res);
      if (res <= cfg.tol || hnext == 0.0) {
        ++j;
        break;
      }
      V.push_back(w / hnext);
    }
    // y = H(0:j, 0:j)^-1 g(0:j)
    const Vector y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    for (int i = 0; i < j; ++i) x += y[i] * Z[i];
    r = b - apply_augmented(s, x);
    beta = r.norm();
    if (beta <= cfg.tol) {
      sol = unpack(s, x);
      sol.diagnostics.method = "fgmres";
      sol.diagnostics.iterations = total;
      sol.diagnostics.residual = beta;
      sol.diagnostics.residual_history = std::move(hist);
      return sol;
    }
  }
  throw ConvergenceError("fgmres: no convergence after " + std::to_string(total) +
                             " iterations, residual " + std::to_string(beta),
                         hist);
}

// ---------------------------------------------------------------------------
// Iterated penalty method

struct IpmConfig {
  double rho = 100.0;
  double gamma = 100.0;
  double tol = 1e-7;  // on ||div u^n||_{L2}
  int max_iterations = 1000;
};

/// u^n solves (A + gamma D) u^n = f + Btilde P^n with D the div-div matrix
/// and P^n = sum_{i<n} rho div u^i accumulated per cell, starting from
/// u^0 = 0. Iterates until ||div u^n|| <= tol.
///
/// In the returned Solution, `pressure` is the raw per-cell pressure
/// -sum_i rho div u^i (the sign matches the -(div v, p) coupling), corrected
/// to mean zero, and `residual_history` holds ||div u^n|| per iteration.
inline Solution iterated_penalty_solve(const SparseMatrix& A, const SparseMatrix& Btilde,
                                       const Vector& measures, const Vector& rhs,
                                       const IpmConfig& cfg = {}) {
  if (!(cfg.rho > 0 && cfg.gamma > 0)) throw Error("iterated_penalty_solve: rho, gamma > 0");
  const Vector minv = measures.cwiseInverse();
  const SparseMatrix Bt = Btilde.transpose();
  const SparseMatrix D = Btilde * minv.asDiagonal() * Bt;
  const ColMatrix K = ColMatrix(A) + cfg.gamma * ColMatrix(D);
  Eigen::SimplicialLLT<ColMatrix> llt(K);
  if (llt.info() != Eigen::Success) throw SingularSystemError("velocity", "A + gamma D not SPD");

  Solution sol;
  sol.diagnostics.method = "ipm";
  Vector P = Vector::Zero(Btilde.cols());
  Vector u = Vector::Zero(A.rows());
  auto& hist = sol.diagnostics.residual_history;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    u = llt.solve(rhs + Btilde * P);
    const Vector div = -(minv.asDiagonal() * (Bt * u));
    const double dn = std::sqrt(div.cwiseProduct(div).dot(measures));
    P += cfg.rho * div;
    hist.push_back(dn);
    if (dn <= cfg.tol) {
      const double mean = P.dot(measures) / measures.sum();
      sol.velocity = u;
      sol.pressure = -(P.array() - mean).matrix();
      sol.diagnostics.iterations = it;
      sol.diagnostics.residual = dn;
      return sol;
    }
    if (dn < best * (1.0 - 1e-3)) {
      best = dn;
      since_best = 0;
    } else if (++since_best > 50) {
      break;
    }
  }
  throw ConvergenceError("ipm: ||div u|| stagnated at " + std::to_string(hist.back()) +
                             " above tolerance " + std::to_string(cfg.tol),
                         hist);
}

// ---------------------------------------------------------------------------
// Discrete inf-sup constant

enum class InfSupMethod { Auto, ShiftInvertLanczos, Lanczos, Dense };

struct InfSupOptions {
  InfSupMethod method = InfSupMethod::Auto;
  double tol = 1e-10;  // relative eigenresidual
  int max_iterations = 600;
  unsigned seed = 12345;
};

struct InfSupResult {
  double beta = 0.0;
  double lambda_min = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::string method;
};

namespace detail {

/// Lanczos with full reorthogonalization for an operator self-adjoint in the
/// inner product <x, y> = x^T M y. Returns the extreme Ritz pair.
struct LanczosOutcome {
  double value = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  double scale = 0.0;  // largest |Ritz value|
  int iterations = 0;
  bool converged = false;
};

inline LanczosOutcome lanczos_extreme(const std::function<Vector(const Vector&)>& op,
                                      const std::function<Vector(const Vector&)>& mass,
                                      Vector start, bool largest, double tol, int maxit,
                                      bool absolute_residual,
                                      const std::function<Vector(const Vector&)>& project = {}) {
  LanczosOutcome out;
  std::vector<Vector> V, MV;
  std::vector<double> alpha, beta;
  auto mnorm = [&](const Vector& v, Vector& mv) {
    mv = mass(v);
    return std::sqrt(std::max(0.0, v.dot(mv)));
  };
  Vector mv;
  double nrm = mnorm(start, mv);
  if (!(nrm > 0)) throw ConvergenceError("lanczos: zero start vector", {});
  V.push_back(start / nrm);
  MV.push_back(mv / nrm);
  const int n = static_cast<int>(start.size());
  for (int j = 0; j < std::min(maxit, n); ++j) {
    Vector w = op(V[j]);
    const double a = w.dot(MV[j]);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass) {
      // Rounding reintroduces deflated directions; strip them every step.
      if (project) w = project(w);
      for (int i = 0; i <= j; ++i) w -= w.dot(MV[i]) * V[i];
    }
    const double b = mnorm(w, mv);
    beta.push_back(b);
    out.iterations = j + 1;

    const int k = j + 1;
    if (k >= 2 || b == 0.0) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
      for (int i = 0; i < k; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      const int idx = largest ? k - 1 : 0;
      out.value = es.eigenvalues()[idx];
      out.scale = es.eigenvalues().cwiseAbs().maxCoeff();
      out.residual = std::abs(b * es.eigenvectors()(k - 1, idx));
      const double ref = absolute_residual ? out.scale : std::abs(out.value);
      if (out.residual <= tol * ref || b == 0.0) {
        out.converged = true;
        return out;
      }
    }
    if (b == 0.0) break;
    V.push_back(w / b);
    MV.push_back(mv / b);
  }
  return out;
}

inline Vector random_vector(int n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(gen);
  return v;
}

inline InfSupResult infsup_dense(const SparseMatrix& A, const SparseMatrix& B, const SparseMatrix& Mp,
                                 const Vector& mean_row) {
  Eigen::SimplicialLLT<ColMatrix> llt{ColMatrix(A)};
  if (llt.info() != Eigen::Success) throw SingularSystemError("velocity", "A not SPD");
  const Eigen::MatrixXd Bd = Eigen::MatrixXd(B);
  const Eigen::MatrixXd AiB = llt.solve(Bd);
  const Eigen::MatrixXd S = Bd.transpose() * AiB;
  const Eigen::MatrixXd Md = Eigen::MatrixXd(Mp);
  const int m = static_cast<int>(B.cols());
  // Orthonormal basis of {q : m^T q = 0}.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(mean_row)};
  const Eigen::MatrixXd Qfull = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd Q = Qfull.rightCols(m - 1);
  const Eigen::MatrixXd Sr = Q.transpose() * S * Q;
  const Eigen::MatrixXd Mr = Q.transpose() * Md * Q;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(0.5 * (Sr + Sr.transpose()),
                                                                0.5 * (Mr + Mr.transpose()));
  if (ges.info() != Eigen::Success) throw ConvergenceError("dense generalized eigensolver failed", {});
  InfSupResult r;
  r.method = "dense";
  r.lambda_min = ges.eigenvalues()[0];
  r.beta = std::sqrt(std::max(0.0, r.lambda_min));
  const Vector q = ges.eigenvectors().col(0);
  r.residual = (Sr * q - r.lambda_min * Mr * q).norm() /
               std::max(1e-300, ges.eigenvalues().cwiseAbs().maxCoeff() * (Mr * q).norm());
  r.iterations = 1;
  return r;
}

}  // namespace detail

/// beta = sqrt(lambda_min) of (B^T A^-1 B) q = lambda M_p q on the subspace
/// m^T q = 0. `A` must be the unit-viscosity stiffness matrix.
///
/// Auto runs shift-invert Lanczos through the mean-constrained saddle
/// factorization; when that matrix is singular (an unstable pair) it falls
/// back to plain Lanczos on M_p^-1 B^T A^-1 B, which resolves a zero
/// eigenvalue directly.
inline InfSupResult compute_infsup_constant(const SparseMatrix& A, const SparseMatrix& B,
                                            const SparseMatrix& Mp, const Vector& mean_row,
                                            const InfSupOptions& opt = {}) {
  const int m = static_cast<int>(B.cols());
  if (Mp.rows() != m || mean_row.size() != m || B.rows() != A.rows())
    throw Error("compute_infsup_constant: inconsistent sizes");
  if (opt.method == InfSupMethod::Dense) return detail::infsup_dense(A, B, Mp, mean_row);

  if (opt.method == InfSupMethod::Auto || opt.method == InfSupMethod::ShiftInvertLanczos) {
    SaddleSystem s;
    s.A = A;
    s.B = B;
    s.mean_row = mean_row;
    s.rhs = Vector::Zero(A.rows());
    SaddleFactorization f(s);
    bool singular = !f.factorized();
    const int n = s.num_velocity();
    auto op = [&](const Vector& q) {
      Vector b = Vector::Zero(s.size());
      b.segment(n, m) = -(Mp * q);
      double rel = 0.0;
      const Vector x = f.solve(b, rel);
      if (!(rel <= SaddleFactorization::kSingularResidual)) singular = true;
      return Vector(x.segment(n, m));
    };
    auto mass = [&](const Vector& v) { return Vector(Mp * v); };
    if (!singular) {
      const Vector start = op(detail::random_vector(m, opt.seed));
      if (!singular) {
        const auto out =
            detail::lanczos_extreme(op, mass, start, true, opt.tol, opt.max_iterations, false);
        if (!singular) {
          if (!out.converged)
            throw ConvergenceError("inf-sup: shift-invert Lanczos did not converge", {});
          InfSupResult r;
          r.method = "shift-invert-lanczos";
          r.lambda_min = 1.0 / out.value;
          r.beta = std::sqrt(std::max(0.0, r.lambda_min));
          r.residual = out.residual / std::abs(out.value);
          r.iterations = out.iterations;
          return r;
        }
      }
    }
    if (opt.method == InfSupMethod::ShiftInvertLanczos)
      throw SingularSystemError("pressure", "inf-sup: saddle matrix is singular");
  }

  // Plain Lanczos on M^-1 S restricted to m^T q = 0 (M-orthogonal to c1 = M^-1 m).
  Eigen::SimplicialLLT<ColMatrix> allt{ColMatrix(A)};
  if (allt.info() != Eigen::Success) throw SingularSystemError("velocity", "A not SPD");
  Eigen::SimplicialLLT<ColMatrix> mllt{ColMatrix(Mp)};
  if (mllt.info() != Eigen::Success) throw Error("inf-sup: pressure mass not SPD");
  const SparseMatrix Bt = B.transpose();
  const Vector c1 = mllt.solve(mean_row);
  const double c1m = c1.dot(mean_row);
  auto project = [&](Vector q) {
    q -= c1 * (mean_row.dot(q) / c1m);
    return q;
  };
  auto op = [&](const Vector& q) {
    const Vector Sq = Bt * allt.solve(B * q);
    return project(mllt.solve(Sq));
  };
  auto mass = [&](const Vector& v) { return Vector(Mp * v); };
  const auto out = detail::lanczos_extreme(op, mass, project(detail::random_vector(m, opt.seed)),
                                           false, opt.tol, opt.max_iterations, true, project);
  if (!out.converged) throw ConvergenceError("inf-sup: Lanczos did not converge", {});
  InfSupResult r;
  r.method = "lanczos";
  r.lambda_min = out.value;
  r.beta = std::sqrt(std::max(0.0, r.lambda_min));
  r.residual = out.residual / std::max(out.scale, 1e-300);
  r.iterations = out.iterations;
  return r;
}

// ---------------------------------------------------------------------------
// Best approximations

struct PressureProjection {
  Vector coefficients;  // psi-basis coefficients
  double error = 0.0;   // ||p - Z c||_{L2}, mean corrected
};

/// L2 projection of p onto span(psi): (Z^T M Z) c = Z^T M pbar with pbar the
/// cell averages of p.
template <int Dim>
PressureProjection project_pressure(const Triangulation<Dim>& t,
                                    const std::function<double(const Point<Dim>&)>& p,
                                    const ConstraintTransform& ct,
                                    int degree = kDefaultQuadratureDegree) {
  const Vector meas = cell_measures(t);
  const Vector pbar = cell_averages<Dim>(t, p, degree);
  const SparseMatrix Mr = reduced_pressure_mass(ct, meas);
  Eigen::SimplicialLLT<ColMatrix> llt{ColMatrix(Mr)};
  if (llt.info() != Eigen::Success) throw Error("project_pressure: psi mass matrix not SPD");
  PressureProjection out;
  out.coefficients = llt.solve(Vector(ct.Z.transpose() * meas.cwiseProduct(pbar)));
  out.error = l2_pressure_distance<Dim>(t, p, ct.expand(out.coefficients), degree);
  return out;
}

template <int Dim>
double best_approx_pressure(const Triangulation<Dim>& t,
                            const std::function<double(const Point<Dim>&)>& p,
                            const ConstraintTransform& ct, int degree = kDefaultQuadratureDegree) {
  return project_pressure<Dim>(t, p, ct, degree).error;
}

/// inf over v_h of |u - v_h|_{H1}: solve A c = r with r_i = (grad u, grad phi_i).
/// `A_unit` is the unit-viscosity stiffness matrix.
template <int Dim>
double best_approx_velocity(const Triangulation<Dim>& t, const DofMap<Dim>& dofs,
                            const SparseMatrix& A_unit, const ManufacturedSolution<Dim>& ms,
                            int degree = kDefaultQuadratureDegree) {
  Eigen::SimplicialLLT<ColMatrix> llt{ColMatrix(A_unit)};
  if (llt.info() != Eigen::Success) throw SingularSystemError("velocity", "A not SPD");
  const Vector r = assemble_gradient_load(t, dofs, ms, degree);
  const Vector c = llt.solve(r);
  return h1_seminorm_error(t, dofs, c, ms, degree);
}

}  // namespace divfree
