#pragma once

/// \file experiment.hpp
/// \brief Convergence studies, error-bound verification, solver timing, and
/// their CSV / text reports.

#include <sys/utsname.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "divfree/errors.hpp"
#include "divfree/fe_assembly.hpp"
#include "divfree/geometry_mesh.hpp"
#include "divfree/manufactured.hpp"
#include "divfree/pressure_constraints.hpp"
#include "divfree/split_refinement.hpp"
#include "divfree/stokes_solvers.hpp"

namespace divfree {

enum class Problem { PS2D, WF3D, WF3DCurl };
enum class SolverKind { Direct, Fgmres, Ipm };

inline std::string problem_name(Problem p) {
  switch (p) {
    case Problem::PS2D: return "ps2d";
    case Problem::WF3D: return "wf3d";
    case Problem::WF3DCurl: return "wf3d-curl";
  }
  return "?";
}

inline Problem parse_problem(const std::string& s) {
  if (s == "ps2d") return Problem::PS2D;
  if (s == "wf3d") return Problem::WF3D;
  if (s == "wf3d-curl" || s == "wf3d_curl") return Problem::WF3DCurl;
  throw Error("unknown problem '" + s + "' (expected ps2d, wf3d or wf3d-curl)");
}

inline int problem_dimension(Problem p) { return p == Problem::PS2D ? 2 : 3; }

inline std::string solver_name(SolverKind s) {
  switch (s) {
    case SolverKind::Direct: return "direct";
    case SolverKind::Fgmres: return "fgmres";
    case SolverKind::Ipm: return "ipm";
  }
  return "?";
}

inline SolverKind parse_solver(const std::string& s) {
  if (s == "direct") return SolverKind::Direct;
  if (s == "fgmres") return SolverKind::Fgmres;
  if (s == "ipm") return SolverKind::Ipm;
  throw Error("unknown solver '" + s + "' (expected direct, fgmres or ipm)");
}

/// "4,8,16" -> {4, 8, 16}
inline std::vector<int> parse_mesh_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::exception&) {
      throw Error("bad mesh size '" + item + "'");
    }
    if (pos != item.size()) throw Error("bad mesh size '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Largest mesh sizes the direct factorization handles on commodity memory.
inline constexpr int kMaxMesh2D = 64;
inline constexpr int kMaxMesh3D = 8;

struct ExperimentSpec {
  int dim = 2;
  std::vector<int> meshes;
  Problem problem = Problem::PS2D;
  double nu = 1.0;
  SolverKind solver = SolverKind::Direct;
  bool beta = false;
  bool bounds = false;  // best approximations and the bound inequalities
  bool timings = false;
  IpmConfig ipm;
  KrylovConfig krylov;
  int quadrature_degree = kDefaultQuadratureDegree;

  void validate() const {
    if (dim != 2 && dim != 3) throw Error("dimension must be 2 or 3");
    if (problem_dimension(problem) != dim)
      throw Error("problem " + problem_name(problem) + " is " +
                  std::to_string(problem_dimension(problem)) + "D but dimension is " +
                  std::to_string(dim));
    if (meshes.empty()) throw Error("no mesh sizes given");
    for (std::size_t i = 0; i < meshes.size(); ++i) {
      if (meshes[i] < 1) throw Error("mesh sizes must be positive");
      if (i > 0 && meshes[i] <= meshes[i - 1]) throw Error("mesh sizes must be strictly increasing");
    }
    const int cap = dim == 2 ? kMaxMesh2D : kMaxMesh3D;
    if (meshes.back() > cap)
      throw Error("n = " + std::to_string(meshes.back()) + " exceeds the " + std::to_string(dim) +
                  "D desk-scale cap n <= " + std::to_string(cap));
    if (!(nu > 0)) throw Error("viscosity must be positive");
    if (quadrature_degree < 2) throw Error("quadrature degree must be at least 2");
  }
};

struct ReportRow {
  int n = 0;
  double h = 0.0;  // max diameter of the coarse mesh
  double err_u_l2 = 0.0, err_u_h1 = 0.0, err_p_l2 = 0.0, div_norm = 0.0;
  std::optional<double> rate_u_l2, rate_u_h1, rate_p_l2;
  std::optional<double> beta;
  std::optional<double> time_s;

  std::optional<double> best_u_h1, best_p_l2;
  std::optional<double> rhs_velocity;   // (1 + 1/beta) best_u_h1
  std::optional<double> velocity_term;  // (nu / beta) |u - u_h|_H1
  std::optional<double> rhs_pressure;   // best_p_l2 + velocity_term
  std::optional<bool> velocity_bound_ok, pressure_bound_ok;
  std::optional<double> dominance;      // velocity_term / best_p_l2

  double uh_h1 = 0.0;  // |u_h|_H1
  int iterations = 0;
  int num_velocity = 0, num_pressure = 0;
};

/// Error from a study stage; carries the rows finished before it.
class StudyError : public Error {
 public:
  StudyError(const std::string& what, std::vector<ReportRow> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<ReportRow>& partial() const { return partial_; }

 private:
  std::vector<ReportRow> partial_;
};

inline double velocity_bound_rhs(double best_u_h1, double beta) {
  return (1.0 + 1.0 / beta) * best_u_h1;
}

inline double pressure_bound_rhs(double best_p_l2, double nu, double beta, double err_u_h1) {
  return best_p_l2 + nu / beta * err_u_h1;
}

inline std::optional<double> convergence_rate(double e1, double e2, double h1, double h2) {
  if (!(e1 > 0 && e2 > 0 && h1 > 0 && h2 > 0) || h1 == h2) return std::nullopt;
  return std::log(e1 / e2) / std::log(h1 / h2);
}

/// Fills the rate columns from consecutive rows.
inline void compute_rates(std::vector<ReportRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    if (i == 0) {
      r.rate_u_l2 = r.rate_u_h1 = r.rate_p_l2 = std::nullopt;
      continue;
    }
    const auto& q = rows[i - 1];
    r.rate_u_l2 = convergence_rate(q.err_u_l2, r.err_u_l2, q.h, r.h);
    r.rate_u_h1 = convergence_rate(q.err_u_h1, r.err_u_h1, q.h, r.h);
    r.rate_p_l2 = convergence_rate(q.err_p_l2, r.err_p_l2, q.h, r.h);
  }
}

// ---------------------------------------------------------------------------
// Pipeline stages

template <int Dim>
Triangulation<Dim> build_structured(int n) {
  if constexpr (Dim == 2)
    return build_structured_square(n);
  else
    return build_structured_cube(n);
}

template <int Dim>
SplitMesh<Dim> split_mesh(const Triangulation<Dim>& t) {
  if constexpr (Dim == 2)
    return powell_sabin_split(t);
  else
    return worsey_farin_split(t);
}

template <int Dim>
ManufacturedSolution<Dim> make_solution(Problem p, double nu) {
  if constexpr (Dim == 2) {
    if (p != Problem::PS2D) throw Error("problem " + problem_name(p) + " is not 2D");
    return make_ps2d(nu);
  } else {
    if (p == Problem::WF3D) return make_wf3d(nu);
    if (p == Problem::WF3DCurl) return make_wf3d_curl(nu);
    throw Error("problem " + problem_name(p) + " is not 3D");
  }
}

/// Everything assembled on one split mesh.
template <int Dim>
struct Discretization {
  SplitMesh<Dim> split;
  DofMap<Dim> dofs;
  SparseMatrix A, A_unit, Btilde;
  Vector measures, load;
  bool reduced = false;
  ConstraintTransform transform;
  SparseMatrix B, Mp;  // constrained divergence and psi-basis mass
  Vector mean_row;

  const Triangulation<Dim>& mesh() const { return split.mesh; }
  SaddleSystem saddle() const { return SaddleSystem{A, B, mean_row, load}; }
};

template <int Dim>
Discretization<Dim> discretize(const Triangulation<Dim>& coarse, const ManufacturedSolution<Dim>& ms,
                               bool reduce, int degree = kDefaultQuadratureDegree) {
  Discretization<Dim> d;
  d.split = split_mesh(coarse);
  const auto& t = d.split.mesh;
  d.dofs = build_dofmap(t);
  d.A_unit = assemble_stiffness(t, d.dofs, 1.0);
  d.A = ms.nu == 1.0 ? d.A_unit : SparseMatrix(ms.nu * d.A_unit);
  d.Btilde = assemble_divergence(t, d.dofs);
  d.measures = cell_measures(t);
  d.load = assemble_load(t, d.dofs, ms, degree);
  if (reduce) {
    d.reduced = true;
    d.transform = build_constraint_transform(d.split);
    d.B = apply_column_operations(d.Btilde, d.transform);
    d.Mp = reduced_pressure_mass(d.transform, d.measures);
    d.mean_row = psi_integrals(d.transform, d.measures);
  }
  return d;
}

struct DiscreteSolution {
  Vector velocity;
  Vector pressure_cells;  // raw P0 field
  int iterations = 0;
};

template <int Dim>
DiscreteSolution solve_discretization(const Discretization<Dim>& d, const ExperimentSpec& spec) {
  DiscreteSolution out;
  if (spec.solver == SolverKind::Ipm) {
    const Solution s = iterated_penalty_solve(d.A, d.Btilde, d.measures, d.load, spec.ipm);
    out.velocity = s.velocity;
    out.pressure_cells = s.pressure;
    out.iterations = s.diagnostics.iterations;
    return out;
  }
  const SaddleSystem sys = d.saddle();
  const Solution s = spec.solver == SolverKind::Direct ? solve_direct(sys)
                                                       : solve_block_preconditioned(sys, spec.krylov);
  out.velocity = s.velocity;
  out.pressure_cells = d.transform.expand(s.pressure);
  out.iterations = s.diagnostics.iterations;
  return out;
}

template <int Dim>
ReportRow compute_row(const ExperimentSpec& spec, int n) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto coarse = build_structured<Dim>(n);
  const auto ms = make_solution<Dim>(spec.problem, spec.nu);
  const bool want_beta = spec.beta || spec.bounds;
  const bool reduce = spec.solver != SolverKind::Ipm || want_beta;
  const auto d = discretize(coarse, ms, reduce, spec.quadrature_degree);
  const auto sol = solve_discretization(d, spec);

  ReportRow r;
  r.n = n;
  r.h = mesh_size(coarse);
  const auto e = error_norms(d.mesh(), d.dofs, sol.velocity, sol.pressure_cells, ms,
                             spec.quadrature_degree);
  r.err_u_l2 = e.l2_velocity;
  r.err_u_h1 = e.h1_seminorm_velocity;
  r.err_p_l2 = e.l2_pressure;
  r.div_norm = e.l2_divergence;
  r.uh_h1 = std::sqrt(std::max(0.0, sol.velocity.dot(d.A_unit * sol.velocity)));
  r.iterations = sol.iterations;
  r.num_velocity = d.dofs.num_velocity();
  r.num_pressure = reduce ? d.transform.num_reduced() : d.mesh().num_cells();

  if (want_beta) r.beta = compute_infsup_constant(d.A_unit, d.B, d.Mp, d.mean_row).beta;
  if (spec.bounds) {
    const double beta = *r.beta;
    r.best_u_h1 = best_approx_velocity(d.mesh(), d.dofs, d.A_unit, ms, spec.quadrature_degree);
    r.best_p_l2 = best_approx_pressure<Dim>(d.mesh(), ms.p, d.transform, spec.quadrature_degree);
    r.rhs_velocity = velocity_bound_rhs(*r.best_u_h1, beta);
    r.velocity_term = spec.nu / beta * r.err_u_h1;
    r.rhs_pressure = pressure_bound_rhs(*r.best_p_l2, spec.nu, beta, r.err_u_h1);
    r.velocity_bound_ok = r.err_u_h1 <= *r.rhs_velocity;
    r.pressure_bound_ok = r.err_p_l2 <= *r.rhs_pressure;
    r.dominance = *r.best_p_l2 > 0 ? *r.velocity_term / *r.best_p_l2
                                   : std::numeric_limits<double>::infinity();
  }
  if (spec.timings)
    r.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// One row per mesh size, in spec order. `on_row` sees each row as soon as
/// it is finished (rates of that row are already set).
inline std::vector<ReportRow> run_convergence_study(
    const ExperimentSpec& spec, const std::function<void(const ReportRow&)>& on_row = {}) {
  spec.validate();
  std::vector<ReportRow> rows;
  for (int n : spec.meshes) {
    try {
      rows.push_back(spec.dim == 2 ? compute_row<2>(spec, n) : compute_row<3>(spec, n));
    } catch (const std::exception& e) {
      compute_rates(rows);
      throw StudyError("n = " + std::to_string(n) + ": " + e.what(), rows);
    }
    compute_rates(rows);
    if (on_row) on_row(rows.back());
  }
  return rows;
}

/// Convergence study with inf-sup constants, best approximations, and both
/// bound inequalities evaluated on every row.
inline std::vector<ReportRow> verify_bounds(ExperimentSpec spec,
                                            const std::function<void(const ReportRow&)>& on_row = {}) {
  spec.beta = true;
  spec.bounds = true;
  return run_convergence_study(spec, on_row);
}

/// Violations of the invariants every run must satisfy.
inline std::vector<std::string> check_invariants(const ExperimentSpec& spec,
                                                 const std::vector<ReportRow>& rows) {
  std::vector<std::string> v;
  char buf[256];
  for (const auto& r : rows) {
    if (spec.solver == SolverKind::Ipm) {
      if (!(r.div_norm <= spec.ipm.tol)) {
        std::snprintf(buf, sizeof buf, "n=%d: ||div u_h|| = %.3e exceeds the penalty tolerance %.1e",
                      r.n, r.div_norm, spec.ipm.tol);
        v.emplace_back(buf);
      }
    } else if (!(r.div_norm <= 1e-8 * r.uh_h1)) {
      std::snprintf(buf, sizeof buf, "n=%d: ||div u_h|| = %.3e exceeds 1e-8 |u_h|_H1 = %.3e", r.n,
                    r.div_norm, 1e-8 * r.uh_h1);
      v.emplace_back(buf);
    }
    if (r.velocity_bound_ok && !*r.velocity_bound_ok) {
      std::snprintf(buf, sizeof buf, "n=%d: velocity bound violated (%.4e > %.4e)", r.n, r.err_u_h1,
                    *r.rhs_velocity);
      v.emplace_back(buf);
    }
    if (r.pressure_bound_ok && !*r.pressure_bound_ok) {
      std::snprintf(buf, sizeof buf, "n=%d: pressure bound violated (%.4e > %.4e)", r.n, r.err_p_l2,
                    *r.rhs_pressure);
      v.emplace_back(buf);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Timing

struct TimingRow {
  int n = 0;
  double h = 0.0;
  double ipm_assembly_s = 0.0, ipm_solve_s = 0.0;
  double direct_assembly_s = 0.0, direct_solve_s = 0.0;
  int ipm_iterations = 0;
  double ipm_div_norm = 0.0;
  double velocity_difference = 0.0;  // ||u_ipm - u_direct||_L2

  double ipm_total_s() const { return ipm_assembly_s + ipm_solve_s; }
  double direct_total_s() const { return direct_assembly_s + direct_solve_s; }
};

struct TimingTable {
  std::string machine;
  std::vector<TimingRow> rows;
};

inline std::string machine_info() {
  std::string s;
  utsname u{};
  if (uname(&u) == 0) s = std::string(u.sysname) + " " + u.release + " " + u.machine;
  s += ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
  return s;
}

namespace detail {

template <int Dim>
TimingRow timing_row(const ExperimentSpec& spec, int n) {
  using clock = std::chrono::steady_clock;
  auto secs = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  const auto coarse = build_structured<Dim>(n);
  const auto ms = make_solution<Dim>(spec.problem, spec.nu);
  TimingRow r;
  r.n = n;
  r.h = mesh_size(coarse);

  // Penalty route: velocity space only.
  auto t0 = clock::now();
  const auto sm = split_mesh(coarse);
  const auto dofs = build_dofmap(sm.mesh);
  const SparseMatrix A = assemble_stiffness(sm.mesh, dofs, spec.nu);
  const SparseMatrix Bt = assemble_divergence(sm.mesh, dofs);
  const Vector meas = cell_measures(sm.mesh);
  const Vector F = assemble_load(sm.mesh, dofs, ms, spec.quadrature_degree);
  auto t1 = clock::now();
  const Solution ipm = iterated_penalty_solve(A, Bt, meas, F, spec.ipm);
  auto t2 = clock::now();
  r.ipm_assembly_s = secs(t0, t1);
  r.ipm_solve_s = secs(t1, t2);
  r.ipm_iterations = ipm.diagnostics.iterations;
  r.ipm_div_norm = ipm.diagnostics.residual;

  // Reduced saddle route: the same assembly plus the constraint transform.
  t0 = clock::now();
  const auto sm2 = split_mesh(coarse);
  const auto dofs2 = build_dofmap(sm2.mesh);
  SaddleSystem sys;
  sys.A = assemble_stiffness(sm2.mesh, dofs2, spec.nu);
  const SparseMatrix Bt2 = assemble_divergence(sm2.mesh, dofs2);
  const auto ct = build_constraint_transform(sm2);
  sys.B = apply_column_operations(Bt2, ct);
  sys.mean_row = psi_integrals(ct, cell_measures(sm2.mesh));
  sys.rhs = assemble_load(sm2.mesh, dofs2, ms, spec.quadrature_degree);
  t1 = clock::now();
  const Solution dir = spec.solver == SolverKind::Fgmres ? solve_block_preconditioned(sys, spec.krylov)
                                                         : solve_direct(sys);
  t2 = clock::now();
  r.direct_assembly_s = secs(t0, t1);
  r.direct_solve_s = secs(t1, t2);

  const SparseMatrix Mv = assemble_velocity_mass(sm.mesh, dofs);
  const Vector diff = ipm.velocity - dir.velocity;
  r.velocity_difference = std::sqrt(std::max(0.0, diff.dot(Mv * diff)));
  return r;
}

}  // namespace detail

/// Wall-clock comparison of the penalty iteration against the reduced
/// saddle solve (direct, or fgmres when the spec selects it).
inline TimingTable timing_comparison(const ExperimentSpec& spec) {
  spec.validate();
  TimingTable tab;
  tab.machine = machine_info();
  for (int n : spec.meshes)
    tab.rows.push_back(spec.dim == 2 ? detail::timing_row<2>(spec, n) : detail::timing_row<3>(spec, n));
  return tab;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kCsvHeader =
    "h,err_u_l2,rate_u_l2,err_u_h1,rate_u_h1,err_p_l2,rate_p_l2,div_norm,beta,time_s";

inline constexpr const char* kBoundsCsvHeader =
    "h,err_u_h1,beta,best_u_h1,rhs_u,u_bound_ok,err_p_l2,best_p_l2,velocity_term,rhs_p,p_bound_ok,"
    "dominance";

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

inline std::string sci(const std::optional<double>& v) { return v ? sci(*v) : std::string(); }

inline std::string flag(const std::optional<bool>& b) {
  return b ? std::string(*b ? "1" : "0") : std::string();
}

inline std::ofstream open_for_writing(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

}  // namespace detail

inline void write_csv(const std::vector<ReportRow>& rows, std::ostream& os) {
  if (rows.empty()) throw Error("emit_csv: no rows");
  os << kCsvHeader << '\n';
  using detail::sci;
  for (const auto& r : rows)
    os << sci(r.h) << ',' << sci(r.err_u_l2) << ',' << sci(r.rate_u_l2) << ',' << sci(r.err_u_h1)
       << ',' << sci(r.rate_u_h1) << ',' << sci(r.err_p_l2) << ',' << sci(r.rate_p_l2) << ','
       << sci(r.div_norm) << ',' << sci(r.beta) << ',' << sci(r.time_s) << '\n';
}

inline void emit_csv(const std::vector<ReportRow>& rows, const std::string& path) {
  if (rows.empty()) throw Error("emit_csv: no rows");
  auto os = detail::open_for_writing(path);
  write_csv(rows, os);
  if (!os) throw Error("write to '" + path + "' failed");
}

/// Reads a file written by emit_csv. Only the CSV columns are restored.
inline std::vector<ReportRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError(1, "unexpected CSV header '" + line + "'");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 10) throw ParseError(lineno, "expected 10 fields, got " + std::to_string(cells.size()));
    auto num = [&](const std::string& c) {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(c, &pos);
      } catch (const std::exception&) {
        throw ParseError(lineno, "bad number '" + c + "'");
      }
      if (pos != c.size()) throw ParseError(lineno, "bad number '" + c + "'");
      return v;
    };
    auto opt = [&](const std::string& c) -> std::optional<double> {
      if (c.empty()) return std::nullopt;
      return num(c);
    };
    ReportRow r;
    r.h = num(cells[0]);
    r.err_u_l2 = num(cells[1]);
    r.rate_u_l2 = opt(cells[2]);
    r.err_u_h1 = num(cells[3]);
    r.rate_u_h1 = opt(cells[4]);
    r.err_p_l2 = num(cells[5]);
    r.rate_p_l2 = opt(cells[6]);
    r.div_norm = num(cells[7]);
    r.beta = opt(cells[8]);
    r.time_s = opt(cells[9]);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<ReportRow> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_csv(in);
}

inline void write_bounds_csv(const std::vector<ReportRow>& rows, std::ostream& os) {
  if (rows.empty()) throw Error("emit_bounds_csv: no rows");
  using detail::flag;
  using detail::sci;
  os << kBoundsCsvHeader << '\n';
  for (const auto& r : rows)
    os << sci(r.h) << ',' << sci(r.err_u_h1) << ',' << sci(r.beta) << ',' << sci(r.best_u_h1) << ','
       << sci(r.rhs_velocity) << ',' << flag(r.velocity_bound_ok) << ',' << sci(r.err_p_l2) << ','
       << sci(r.best_p_l2) << ',' << sci(r.velocity_term) << ',' << sci(r.rhs_pressure) << ','
       << flag(r.pressure_bound_ok) << ',' << sci(r.dominance) << '\n';
}

inline void emit_bounds_csv(const std::vector<ReportRow>& rows, const std::string& path) {
  auto os = detail::open_for_writing(path);
  write_bounds_csv(rows, os);
}

/// Fixed-width text table: h, L2 velocity error and rate, L2 pressure error
/// and rate, divergence norm, beta, then the H1 columns.
inline std::string emit_table(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw Error("emit_table: no rows");
  auto cell = [](const std::optional<double>& v, bool rate) {
    char buf[32];
    if (!v) return std::string(rate ? "     --" : "        --");
    std::snprintf(buf, sizeof buf, rate ? "%7.3f" : "%10.4e", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "         h     |u-uh|_L2    rate     |p-ph|_L2    rate  |div uh|_L2        beta     |u-uh|_H1    rate\n";
  for (const auto& r : rows) {
    os << cell(r.h, false) << "  " << cell(r.err_u_l2, false) << "  " << cell(r.rate_u_l2, true) << "  "
       << cell(r.err_p_l2, false) << "  " << cell(r.rate_p_l2, true) << "  " << cell(r.div_norm, false)
       << "  " << cell(r.beta, false) << "  " << cell(r.err_u_h1, false) << "  "
       << cell(r.rate_u_h1, true) << '\n';
  }
  return os.str();
}

inline std::string emit_bounds_table(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  char buf[256];
  os << "         h   |u-uh|_H1        beta   inf|u-v|_H1  vel. RHS  ok     |p-ph|_L2   inf|p-q|_L2  "
        "vel. term  pres. RHS  ok  dominance\n";
  for (const auto& r : rows) {
    if (!r.rhs_velocity) continue;
    std::snprintf(buf, sizeof buf,
                  "%10.4e  %10.4e  %10.4e  %10.4e  %10.4e  %s  %10.4e  %10.4e  %10.4e  %10.4e  %s  %9.3f\n",
                  r.h, r.err_u_h1, *r.beta, *r.best_u_h1, *r.rhs_velocity,
                  *r.velocity_bound_ok ? "y " : "NO", r.err_p_l2, *r.best_p_l2, *r.velocity_term,
                  *r.rhs_pressure, *r.pressure_bound_ok ? "y " : "NO", *r.dominance);
    os << buf;
  }
  return os.str();
}

inline std::string emit_timing_table(const TimingTable& tab) {
  std::ostringstream os;
  char buf[256];
  os << "machine: " << tab.machine << '\n';
  os << "         h   ipm solve   ipm total   sys solve   sys total  ipm its  ||u_ipm-u_sys||\n";
  for (const auto& r : tab.rows) {
    std::snprintf(buf, sizeof buf, "%10.4e  %10.3e  %10.3e  %10.3e  %10.3e  %7d  %10.4e\n", r.h,
                  r.ipm_solve_s, r.ipm_total_s(), r.direct_solve_s, r.direct_total_s(),
                  r.ipm_iterations, r.velocity_difference);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration files: `key = value` lines, '#' starts a comment.

struct ConfigEntry {
  int line = 0;
  std::string key, value;
};

inline std::vector<ConfigEntry> parse_config(std::istream& in) {
  std::vector<ConfigEntry> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    ConfigEntry e{lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key.empty()) throw ParseError(lineno, "empty key");
    if (e.value.empty()) throw ParseError(lineno, "empty value for '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ConfigEntry> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  return parse_config(in);
}

/// Applies config entries on top of `spec`. Unknown keys are errors.
inline void apply_config(ExperimentSpec& spec, const std::vector<ConfigEntry>& entries) {
  for (const auto& e : entries) {
    auto real = [&] {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(e.value, &pos);
      } catch (const std::exception&) {
        throw ParseError(e.line, "'" + e.key + "' needs a number");
      }
      if (pos != e.value.size()) throw ParseError(e.line, "'" + e.key + "' needs a number");
      return v;
    };
    auto integer = [&] {
      const double v = real();
      if (v != std::floor(v)) throw ParseError(e.line, "'" + e.key + "' needs an integer");
      return static_cast<int>(v);
    };
    auto boolean = [&] {
      if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
      if (e.value == "false" || e.value == "0" || e.value == "no") return false;
      throw ParseError(e.line, "'" + e.key + "' needs true or false");
    };
    try {
      if (e.key == "solver") spec.solver = parse_solver(e.value);
      else if (e.key == "ipm.rho") spec.ipm.rho = real();
      else if (e.key == "ipm.gamma") spec.ipm.gamma = real();
      else if (e.key == "ipm.tol") spec.ipm.tol = real();
      else if (e.key == "ipm.maxit") spec.ipm.max_iterations = integer();
      else if (e.key == "krylov.tol") spec.krylov.tol = real();
      else if (e.key == "krylov.maxit") spec.krylov.max_iterations = integer();
      else if (e.key == "krylov.restart") spec.krylov.restart = integer();
      else if (e.key == "dim") spec.dim = integer();
      else if (e.key == "problem") spec.problem = parse_problem(e.value);
      else if (e.key == "nu") spec.nu = real();
      else if (e.key == "n") spec.meshes = parse_mesh_list(e.value);
      else if (e.key == "beta") spec.beta = boolean();
      else if (e.key == "bounds") spec.bounds = boolean();
      else if (e.key == "timings") spec.timings = boolean();
      else if (e.key == "quadrature.degree") spec.quadrature_degree = integer();
      else throw ParseError(e.line, "unknown key '" + e.key + "'");
    } catch (const ParseError&) {
      throw;
    } catch (const Error& err) {
      throw ParseError(e.line, err.what());
    }
  }
}

}  // namespace divfree
