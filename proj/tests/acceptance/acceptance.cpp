// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "divfree.hpp"

using namespace divfree;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::map<int, bool> verdicts;
std::map<int, std::string> report;  // printed in criterion order at the end
int current = 0;

template <class... T>
void emit(const char* fmt, T... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  report[current] += buf;
}

void verdict(int id, bool pass, const std::string& title) {
  verdicts[id] = pass;
  emit("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", id, title.c_str());
}

template <class... T>
void info(const char* fmt, T... args) {
  report[current] += "      ";
  emit(fmt, args...);
  report[current] += "\n";
}

// Every reduced-pair solve of the run, for the divergence criterion.
struct DivRecord {
  std::string label;
  double div;
};
std::vector<DivRecord> div_log;

void log_rows(const std::string& label, const std::vector<ReportRow>& rows) {
  for (const auto& r : rows) div_log.push_back({label + " n=" + std::to_string(r.n), r.div_norm});
}

ExperimentSpec make_spec(int dim, Problem p, double nu, std::vector<int> meshes) {
  ExperimentSpec s;
  s.dim = dim;
  s.problem = p;
  s.nu = nu;
  s.meshes = std::move(meshes);
  return s;
}

double max_rel_variation(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return (*hi - *lo) / *hi;
}

// ---------------------------------------------------------------------------

std::vector<ReportRow> rows2d;  // nu = 1 sweep with beta

void criterion_1() {
  const auto t0 = clock_type::now();
  auto s = make_spec(2, Problem::PS2D, 1.0, {4, 8, 16, 32});
  s.beta = true;
  rows2d = run_convergence_study(s);
  const double elapsed = seconds_since(t0);
  log_rows("2D ps2d nu=1", rows2d);
  for (const auto& r : rows2d)
    info("n=%-3d h=%.4e  L2u=%.4e  H1u=%.4e  L2p=%.4e", r.n, r.h, r.err_u_l2, r.err_u_h1, r.err_p_l2);
  const auto& last = rows2d.back();
  const double ru = *last.rate_u_l2, rp = *last.rate_p_l2, rh = *last.rate_u_h1;
  info("last rates: L2u %.3f in [1.8,2.2], L2p %.3f in [0.8,1.2], H1u %.3f in [0.8,1.2]", ru, rp, rh);
  info("runtime %.1f s (limit 120 s, includes the inf-sup solves)", elapsed);
  const bool ok = ru >= 1.8 && ru <= 2.2 && rp >= 0.8 && rp <= 1.2 && rh >= 0.8 && rh <= 1.2 && elapsed <= 120;
  verdict(1, ok, "2D convergence rates");
}

std::vector<ReportRow> rows3d;  // nu = 1 sweep with beta

template <int Dim>
double raw_lambda_min(int n) {
  const auto ms = make_solution<Dim>(Dim == 2 ? Problem::PS2D : Problem::WF3D, 1.0);
  const auto d = discretize(build_structured<Dim>(n), ms, false);
  return compute_infsup_constant(d.A_unit, d.Btilde, assemble_pressure_mass(d.mesh()), d.measures)
      .lambda_min;
}

void criterion_3() {
  auto s = make_spec(3, Problem::WF3D, 1.0, {1, 2, 4});
  s.beta = true;
  rows3d = run_convergence_study(s);
  log_rows("3D wf3d nu=1", rows3d);

  std::vector<double> b2, b3;
  for (const auto& r : rows2d) b2.push_back(*r.beta);
  for (const auto& r : rows3d) b3.push_back(*r.beta);
  const double b2min = *std::min_element(b2.begin(), b2.end());
  const double ratio2 = b2min / *std::max_element(b2.begin(), b2.end());
  for (const auto& r : rows2d) info("2D n=%-3d beta=%.5f", r.n, *r.beta);
  info("2D min beta %.5f (>= 0.05), min/max %.4f (>= 0.5)", b2min, ratio2);
  for (const auto& r : rows3d) info("3D n=%-3d beta=%.5f", r.n, *r.beta);
  const double var3 = max_rel_variation(b3);
  info("3D variation (max-min)/max = %.2f%% (<= 15%%)", 100 * var3);
  info("3D variation without n=1: %.2f%%",
       100 * max_rel_variation(std::vector<double>(b3.begin() + 1, b3.end())));

  bool raw_ok = true;
  for (int n : {4, 8, 16, 32}) {
    const double l = raw_lambda_min<2>(n);
    info("2D n=%-3d unreduced pair lambda_min = %.3e", n, l);
    raw_ok &= std::abs(l) <= 1e-10;
  }
  for (int n : {1, 2, 4}) {
    const double l = raw_lambda_min<3>(n);
    info("3D n=%-3d unreduced pair lambda_min = %.3e", n, l);
    raw_ok &= std::abs(l) <= 1e-10;
  }
  const bool ok = b2min >= 0.05 && ratio2 >= 0.5 && var3 <= 0.15 && raw_ok;
  verdict(3, ok, "inf-sup sweeps and spurious-mode detection");
}

template <int Dim>
double theta_sweep(int n, unsigned seed) {
  SplitMesh<Dim> sm;
  if constexpr (Dim == 2)
    sm = powell_sabin_split(build_structured_square(n));
  else
    sm = worsey_farin_split(build_structured_cube(n));
  const auto dofs = build_dofmap(sm.mesh);
  const auto theta = build_theta_functionals(sm);
  const SparseMatrix A = assemble_stiffness(sm.mesh, dofs, 1.0);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(dofs.num_velocity());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = nd(gen);
    const double gradnorm = std::sqrt(v.dot(A * v));
    const Vector d = divergence_per_cell(sm.mesh, dofs, v);
    for (const auto& th : theta) worst = std::max(worst, std::abs(th(d)) / gradnorm);
  }
  return worst;
}

void criterion_4() {
  const auto t0 = clock_type::now();
  const double w2 = theta_sweep<2>(4, 101);
  const double w3 = theta_sweep<3>(2, 202);
  const double elapsed = seconds_since(t0);
  info("2D n=4: max |theta(div v)| / ||grad v|| = %.3e", w2);
  info("3D n=2: max |theta(div v)| / ||grad v|| = %.3e", w3);
  info("runtime %.1f s (limit 30 s)", elapsed);
  verdict(4, w2 <= 1e-12 && w3 <= 1e-12 && elapsed <= 30, "weak continuity of discrete divergences");
}

// psi-basis divergence matrix assembled cell by cell from the basis formulas.
template <int Dim>
Eigen::MatrixXd psi_divergence_direct(const SplitMesh<Dim>& sm, const DofMap<Dim>& dofs) {
  // (group, list of (j, coefficient)) per reduced column, in column order.
  std::vector<std::vector<std::pair<int, double>>> cols;
  std::vector<int> col_group;
  for (int z = 0; z < sm.num_groups(); ++z) {
    if constexpr (Dim == 2) {
      for (int j = 2; j <= sm.group_size(z); ++j) {
        cols.push_back({{j, 1.0}, {1, j % 2 ? -1.0 : 1.0}});
        col_group.push_back(z);
      }
    } else {
      cols.push_back({{3, 1.0}, {1, 1.0}, {2, 1.0}});
      col_group.push_back(z);
      if (sm.group_interior[z]) {
        cols.push_back({{4, 1.0}, {1, 1.0}});
        cols.push_back({{5, 1.0}, {2, 1.0}});
        cols.push_back({{6, 1.0}, {1, -1.0}, {2, -1.0}});
        col_group.insert(col_group.end(), {z, z, z});
      }
    }
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(dofs.num_velocity(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (const auto& [j, coef] : cols[c]) {
      const int cell = sm.sigma(col_group[c], j);
      const auto g = cell_geometry(sm.mesh, cell);
      for (int a = 0; a <= Dim; ++a)
        for (int comp = 0; comp < Dim; ++comp) {
          const int i = dofs.velocity_dof(sm.mesh.cells[cell][a], comp);
          if (i >= 0) B(i, c) += -coef * g.measure * g.grads(a, comp);
        }
    }
  return B;
}

template <int Dim>
bool transform_oracle(int n) {
  SplitMesh<Dim> sm;
  if constexpr (Dim == 2)
    sm = powell_sabin_split(build_structured_square(n));
  else
    sm = worsey_farin_split(build_structured_cube(n));
  const auto dofs = build_dofmap(sm.mesh);
  const auto ct = build_constraint_transform(sm);
  const Eigen::MatrixXd B(apply_column_operations(assemble_divergence(sm.mesh, dofs), ct));
  const Eigen::MatrixXd D = psi_divergence_direct(sm, dofs);
  const bool shape = B.rows() == D.rows() && B.cols() == D.cols();
  const double diff = shape ? (B - D).cwiseAbs().maxCoeff() : INFINITY;
  int expected = 0;
  if constexpr (Dim == 2) {
    for (int z = 0; z < sm.num_groups(); ++z) expected += sm.group_size(z) - 1;
  } else {
    expected = 4 * sm.num_interior_groups() + sm.num_boundary_groups();
  }
  info("%dD n=%d: max |column ops - direct psi assembly| = %.3e; reduced dim %d (expected %d)", Dim, n,
       diff, ct.num_reduced(), expected);
  return diff <= 1e-14 && ct.num_reduced() == expected;
}

void criterion_5() {
  bool ok = transform_oracle<2>(1) && transform_oracle<2>(2) && transform_oracle<3>(1);
  const auto sm = worsey_farin_split(build_structured_cube(1));
  Eigen::Matrix<double, 6, 4> N;
  N << 1, 1, 0, -1,  //
      1, 0, 1, -1,   //
      1, 0, 0, 0,    //
      0, 1, 0, 0,    //
      0, 0, 1, 0,    //
      0, 0, 0, 1;
  int checked = 0;
  bool local_ok = true;
  for (int z = 0; z < sm.num_groups(); ++z) {
    if (!sm.group_interior[z]) continue;
    const auto C = local_constraint_matrix_3d(sm, z);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
    const auto& sv = svd.singularValues();
    const int rank = (sv.array() > 1e-12 * sv[0]).count();
    local_ok &= rank == 2 && (C * N).cwiseAbs().maxCoeff() == 0.0;
    ++checked;
  }
  info("3D n=1: %d interior split points, rank(C) = 2 and C N = 0 exactly: %s", checked,
       local_ok ? "yes" : "no");
  verdict(5, ok && local_ok && checked > 0, "constraint transform oracle");
}

void criterion_6() {
  const auto r2 = verify_bounds(make_spec(2, Problem::PS2D, 1e-2, {4, 8, 16, 32}));
  const auto r3 = verify_bounds(make_spec(3, Problem::WF3D, 1e-3, {1, 2, 4}));
  log_rows("2D ps2d nu=1e-2", r2);
  log_rows("3D wf3d nu=1e-3", r3);
  bool bounds_ok = true, dom2 = true;
  for (const auto& r : r2) {
    info("2D n=%-3d |u-uh|_H1 %.3e <= %.3e %s   |p-ph| %.3e <= %.3e %s   dominance %.3f", r.n, r.err_u_h1,
         *r.rhs_velocity, *r.velocity_bound_ok ? "ok" : "NO", r.err_p_l2, *r.rhs_pressure,
         *r.pressure_bound_ok ? "ok" : "NO", *r.dominance);
    bounds_ok &= *r.velocity_bound_ok && *r.pressure_bound_ok;
    dom2 &= *r.dominance > 1.0;
  }
  for (const auto& r : r3) {
    info("3D n=%-3d |u-uh|_H1 %.3e <= %.3e %s   |p-ph| %.3e <= %.3e %s   dominance %.3f", r.n, r.err_u_h1,
         *r.rhs_velocity, *r.velocity_bound_ok ? "ok" : "NO", r.err_p_l2, *r.rhs_pressure,
         *r.pressure_bound_ok ? "ok" : "NO", *r.dominance);
    bounds_ok &= *r.velocity_bound_ok && *r.pressure_bound_ok;
  }
  const bool dom3 = *r3.back().dominance > 1.0;
  info("velocity term dominates: 2D every row %s; 3D finest mesh %s", dom2 ? "yes" : "no", dom3 ? "yes" : "no");
  verdict(6, bounds_ok && dom2 && dom3, "error-bound inequalities and dominance");
}

void criterion_7() {
  double worst = 0.0;
  for (int n : {4, 8, 16, 32}) {
    const auto coarse = build_structured_square(n);
    const auto d1 = discretize(coarse, make_ps2d(1.0), true);
    const auto d2 = discretize(coarse, make_ps2d(1e-2), true);
    const auto s1 = solve_direct(d1.saddle());
    const auto s2 = solve_direct(d2.saddle());
    for (const auto* p : {&s1, &s2}) {
      const Vector dv = divergence_per_cell(d1.mesh(), d1.dofs, p->velocity);
      div_log.push_back({"2D nu-pair n=" + std::to_string(n),
                         std::sqrt(dv.cwiseProduct(dv).dot(d1.measures))});
    }
    const double rel = (s1.velocity - s2.velocity).norm() / s1.velocity.norm();
    info("n=%-3d ||u(nu=1) - u(nu=1e-2)|| / ||u(nu=1)|| = %.3e", n, rel);
    worst = std::max(worst, rel);
  }
  verdict(7, worst <= 1e-9, "viscosity independence of the velocity");
}

template <int Dim>
struct IpmCheck {
  int n;
  int iterations;
  double div, diff, theta;
};

template <int Dim>
IpmCheck<Dim> ipm_check(Problem p, int n) {
  const auto ms = make_solution<Dim>(p, 1.0);
  const auto d = discretize(build_structured<Dim>(n), ms, true);
  IpmConfig cfg;  // rho = gamma = 100, tol = 1e-7
  const auto ipm = iterated_penalty_solve(d.A, d.Btilde, d.measures, d.load, cfg);
  const auto dir = solve_direct(d.saddle());
  const Vector dv = divergence_per_cell(d.mesh(), d.dofs, dir.velocity);
  div_log.push_back({std::to_string(Dim) + "D ipm reference n=" + std::to_string(n),
                     std::sqrt(dv.cwiseProduct(dv).dot(d.measures))});
  const SparseMatrix Mv = assemble_velocity_mass(d.mesh(), d.dofs);
  const Vector e = ipm.velocity - dir.velocity;
  double th = 0.0;
  for (const auto& t : build_theta_functionals(d.split)) th = std::max(th, std::abs(t(ipm.pressure)));
  return {n, ipm.diagnostics.iterations, ipm.diagnostics.residual, std::sqrt(e.dot(Mv * e)), th};
}

template <int Dim>
bool ipm_sweep(Problem p, const std::vector<int>& meshes) {
  std::vector<IpmCheck<Dim>> rows;
  for (int n : meshes) {
    try {
      rows.push_back(ipm_check<Dim>(p, n));
    } catch (const ConvergenceError& e) {
      info("%dD n=%d: %s", Dim, n, e.what());
      return false;
    }
  }
  // C from the coarsest mesh, with a factor 2 margin.
  const double C = 2.0 * rows.front().diff / rows.front().div;
  bool ok = true;
  for (const auto& r : rows) {
    const bool fine = r.diff <= C * r.div && r.theta <= 1e-6;
    info("%dD n=%-3d its %3d  ||div u^n|| %.3e  ||u_ipm-u_h||_L2 %.3e  ratio %.3f (C = %.3f)  max|theta(p)| %.1e",
         Dim, r.n, r.iterations, r.div, r.diff, r.diff / r.div, C, r.theta);
    ok &= fine;
  }
  return ok;
}

void criterion_8() {
  const bool ok2 = ipm_sweep<2>(Problem::PS2D, {4, 8, 16, 32});
  const bool ok3 = ipm_sweep<3>(Problem::WF3DCurl, {1, 2, 4});
  verdict(8, ok2 && ok3, "iterated penalty method");
}

void criterion_2() {
  // Iterative solve on the reduced pair, terminated well inside the 1e-8
  // residual bound.
  {
    const auto d = discretize(build_structured_square(8), make_ps2d(1.0), true);
    KrylovConfig tight;
    tight.tol = 1e-10;
    for (const auto& cfg : {KrylovConfig{}, tight}) {
      const auto s = solve_block_preconditioned(d.saddle(), cfg);
      const Vector dv = divergence_per_cell(d.mesh(), d.dofs, s.velocity);
      const double div = std::sqrt(dv.cwiseProduct(dv).dot(d.measures));
      if (cfg.tol == tight.tol)
        div_log.push_back({"2D fgmres n=8 (residual 1e-10)", div});
      else
        info("(not gated) fgmres n=8 at residual %.0e: ||div u_h|| = %.3e, |u_h|_H1 = %.3e", cfg.tol, div,
             std::sqrt(s.velocity.dot(d.A_unit * s.velocity)));
    }
  }
  double worst = 0.0;
  std::string where;
  for (const auto& r : div_log)
    if (r.div >= worst) {
      worst = r.div;
      where = r.label;
    }
  info("%zu reduced-pair solves, largest ||div u_h||_L2 = %.3e (%s)", div_log.size(), worst, where.c_str());
  verdict(2, worst <= 1e-8, "discrete velocities are divergence-free");
}

void criterion_9() {
  const auto t0 = clock_type::now();
  auto s = make_spec(3, Problem::WF3D, 1.0, {1});
  const auto rows = verify_bounds(s);
  const double elapsed = seconds_since(t0);
  log_rows("3D smoke", rows);
  const auto coarse = build_structured_cube(1);
  const auto sm = worsey_farin_split(coarse);
  const int T = coarse.num_cells(), SI = sm.num_interior_groups(), SB = sm.num_boundary_groups();
  const bool counts = sm.mesh.num_cells() == 72 && 12 * T == 6 * SI + 3 * SB && coarse.num_interior_facets() == SI;
  info("72 tets: %d; 12|T| = %d, 6|S_I| + 3|S_B| = %d; interior faces %d, |S_I| = %d", sm.mesh.num_cells(), 12 * T,
       6 * SI + 3 * SB, coarse.num_interior_facets(), SI);
  info("solve + beta + bounds in %.2f s (limit 10 s); beta = %.5f", elapsed, *rows[0].beta);
  verdict(9, counts && elapsed <= 10 && *rows[0].velocity_bound_ok && *rows[0].pressure_bound_ok,
          "3D pipeline smoke test");
}

std::string csv_bytes(const ExperimentSpec& s) {
  std::ostringstream os;
  write_csv(run_convergence_study(s), os);
  return os.str();
}

void criterion_10() {
  auto a = make_spec(2, Problem::PS2D, 1.0, {4, 8});
  a.beta = true;
  auto b = make_spec(3, Problem::WF3DCurl, 1.0, {1, 2});
  b.beta = true;
  auto c = make_spec(2, Problem::PS2D, 1.0, {4, 8});
  c.solver = SolverKind::Ipm;
  bool same = true;
  for (const auto* s : {&a, &b, &c}) {
    const std::string x = csv_bytes(*s), y = csv_bytes(*s);
    info("%s %s: %zu bytes, identical: %s", problem_name(s->problem).c_str(), solver_name(s->solver).c_str(),
         x.size(), x == y ? "yes" : "no");
    same &= x == y;
  }
  verdict(10, same, "deterministic CSV output");
}

template <class F>
void guarded(int id, const char* title, F&& f) {
  current = id;
  try {
    f();
  } catch (const std::exception& e) {
    info("error: %s", e.what());
    verdict(id, false, title);
  }
}

}  // namespace

int main() {
  const auto t0 = clock_type::now();
  guarded(1, "2D convergence rates", criterion_1);
  guarded(3, "inf-sup sweeps and spurious-mode detection", criterion_3);
  guarded(4, "weak continuity of discrete divergences", criterion_4);
  guarded(5, "constraint transform oracle", criterion_5);
  guarded(6, "error-bound inequalities and dominance", criterion_6);
  guarded(7, "viscosity independence of the velocity", criterion_7);
  guarded(8, "iterated penalty method", criterion_8);
  guarded(9, "3D pipeline smoke test", criterion_9);
  guarded(2, "discrete velocities are divergence-free", criterion_2);
  guarded(10, "deterministic CSV output", criterion_10);
  int failed = 0;
  for (const auto& [id, pass] : verdicts) failed += !pass;
  for (const auto& [id, text] : report) std::fputs(text.c_str(), stdout);
  std::printf("summary: %d of %zu criteria passed (%.0f s)\n", static_cast<int>(verdicts.size()) - failed,
              verdicts.size(), seconds_since(t0));
  return failed ? 1 : 0;
}
