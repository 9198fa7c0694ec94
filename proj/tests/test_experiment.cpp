#include <sstream>

#include <gtest/gtest.h>

#include "divfree/experiment.hpp"

using namespace divfree;

namespace {

ExperimentSpec spec2d(std::vector<int> meshes, SolverKind solver = SolverKind::Direct) {
  ExperimentSpec s;
  s.dim = 2;
  s.problem = Problem::PS2D;
  s.meshes = std::move(meshes);
  s.solver = solver;
  return s;
}

std::string csv_of(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  write_csv(rows, os);
  return os.str();
}

template <class F>
std::size_t parse_error_line(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST(Parsing, NamesRoundTrip) {
  for (auto p : {Problem::PS2D, Problem::WF3D, Problem::WF3DCurl}) EXPECT_EQ(parse_problem(problem_name(p)), p);
  EXPECT_EQ(parse_problem("wf3d_curl"), Problem::WF3DCurl);
  for (auto s : {SolverKind::Direct, SolverKind::Fgmres, SolverKind::Ipm}) EXPECT_EQ(parse_solver(solver_name(s)), s);
  EXPECT_THROW(parse_problem("ps3d"), Error);
  EXPECT_THROW(parse_solver("cg"), Error);
  EXPECT_EQ(problem_dimension(Problem::WF3DCurl), 3);
}

TEST(Parsing, MeshList) {
  EXPECT_EQ(parse_mesh_list("4,8,16"), (std::vector<int>{4, 8, 16}));
  EXPECT_EQ(parse_mesh_list("2"), (std::vector<int>{2}));
  EXPECT_THROW(parse_mesh_list("4,x"), Error);
  EXPECT_THROW(parse_mesh_list("4,8.5"), Error);
}

TEST(Spec, Validation) {
  auto s = spec2d({2, 4});
  EXPECT_NO_THROW(s.validate());
  s.meshes = {4, 4};
  EXPECT_THROW(s.validate(), Error);
  s.meshes = {};
  EXPECT_THROW(s.validate(), Error);
  s.meshes = {0, 2};
  EXPECT_THROW(s.validate(), Error);
  s = spec2d({2});
  s.nu = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s = spec2d({2});
  s.problem = Problem::WF3D;
  EXPECT_THROW(s.validate(), Error);
  s.dim = 4;
  EXPECT_THROW(s.validate(), Error);
  s = spec2d({32, 64});
  EXPECT_NO_THROW(s.validate());
  s.meshes = {65};
  EXPECT_THROW(s.validate(), Error);
  s.dim = 3;
  s.problem = Problem::WF3D;
  s.meshes = {8};
  EXPECT_NO_THROW(s.validate());
  s.meshes = {48};
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("desk-scale cap"), std::string::npos);
  }
}

TEST(Rates, FromConsecutiveRows) {
  EXPECT_NEAR(*convergence_rate(4.0, 1.0, 0.5, 0.25), 2.0, 1e-15);
  EXPECT_FALSE(convergence_rate(0.0, 1.0, 0.5, 0.25));
  EXPECT_FALSE(convergence_rate(1.0, 1.0, 0.5, 0.5));
  std::vector<ReportRow> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].h = std::pow(0.5, i);
    rows[i].err_u_l2 = std::pow(0.25, i);
    rows[i].err_u_h1 = std::pow(0.5, i);
    rows[i].err_p_l2 = 1.0;
  }
  compute_rates(rows);
  EXPECT_FALSE(rows[0].rate_u_l2);
  EXPECT_NEAR(*rows[2].rate_u_l2, 2.0, 1e-14);
  EXPECT_NEAR(*rows[2].rate_u_h1, 1.0, 1e-14);
  EXPECT_NEAR(*rows[1].rate_p_l2, 0.0, 1e-14);
  EXPECT_DOUBLE_EQ(velocity_bound_rhs(2.0, 0.5), 6.0);
  EXPECT_DOUBLE_EQ(pressure_bound_rhs(1.0, 0.1, 0.5, 3.0), 1.6);
}

TEST(Study, DirectRowsAndCallbacks) {
  auto s = spec2d({2, 4});
  s.beta = true;
  int calls = 0;
  const auto rows = run_convergence_study(s, [&](const ReportRow&) { ++calls; });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(calls, 2);
  EXPECT_FALSE(rows[0].rate_u_l2);
  EXPECT_TRUE(rows[1].rate_u_l2);
  EXPECT_LT(rows[1].err_u_l2, rows[0].err_u_l2);
  for (const auto& r : rows) {
    EXPECT_LE(r.div_norm, 1e-8 * r.uh_h1);
    ASSERT_TRUE(r.beta);
    EXPECT_GT(*r.beta, 0.05);
    EXPECT_FALSE(r.time_s);
  }
  EXPECT_NEAR(rows[1].h, std::sqrt(2.0) / 4, 1e-15);
  EXPECT_TRUE(check_invariants(s, rows).empty());
}

TEST(Study, DeterministicCsv) {
  auto s = spec2d({2, 4});
  s.beta = true;
  EXPECT_EQ(csv_of(run_convergence_study(s)), csv_of(run_convergence_study(s)));
}

TEST(Study, SolversAgree) {
  const auto d = run_convergence_study(spec2d({4}));
  const auto k = run_convergence_study(spec2d({4}, SolverKind::Fgmres));
  auto is = spec2d({4}, SolverKind::Ipm);
  is.ipm.tol = 1e-10;
  const auto i = run_convergence_study(is);
  EXPECT_NEAR(k[0].err_u_l2, d[0].err_u_l2, 1e-6 * d[0].err_u_l2);
  EXPECT_NEAR(i[0].err_u_l2, d[0].err_u_l2, 1e-6 * d[0].err_u_l2);
  EXPECT_NEAR(i[0].err_p_l2, d[0].err_p_l2, 1e-5 * d[0].err_p_l2);
  EXPECT_LE(i[0].div_norm, 1e-10);
  EXPECT_TRUE(check_invariants(is, i).empty());
}

TEST(Study, FailureKeepsFinishedRows) {
  const auto first = run_convergence_study(spec2d({2}, SolverKind::Fgmres));
  auto s = spec2d({2, 16}, SolverKind::Fgmres);
  s.krylov.max_iterations = first[0].iterations;
  try {
    run_convergence_study(s);
    FAIL();
  } catch (const StudyError& e) {
    ASSERT_EQ(e.partial().size(), 1u);
    EXPECT_EQ(e.partial()[0].n, 2);
    EXPECT_NE(std::string(e.what()).find("n = 16"), std::string::npos);
  }
}

TEST(Study, DimensionDispatch) {
  Instrumentation::reset();
  ExperimentSpec s;
  s.dim = 3;
  s.problem = Problem::WF3D;
  s.meshes = {1};
  const auto rows = run_convergence_study(s);
  EXPECT_EQ(Instrumentation::worsey_farin_splits.load(), 1);
  EXPECT_EQ(Instrumentation::powell_sabin_splits.load(), 0);
  EXPECT_EQ(Instrumentation::transforms_3d.load(), 1);
  EXPECT_EQ(Instrumentation::transforms_2d.load(), 0);
  EXPECT_EQ(rows[0].num_velocity, 36);
  EXPECT_EQ(rows[0].num_pressure, 72 - 36);
}

TEST(Study, BoundsColumns) {
  auto s = spec2d({2, 4});
  s.nu = 1e-2;
  const auto rows = verify_bounds(s);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.best_u_h1 && r.best_p_l2 && r.dominance);
    EXPECT_TRUE(*r.velocity_bound_ok);
    EXPECT_TRUE(*r.pressure_bound_ok);
    EXPECT_LE(*r.best_u_h1, r.err_u_h1 * (1 + 1e-12));
    EXPECT_NEAR(*r.rhs_pressure, *r.best_p_l2 + *r.velocity_term, 1e-15);
  }
  std::ostringstream os;
  write_bounds_csv(rows, os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kBoundsCsvHeader);
  EXPECT_NE(emit_bounds_table(rows).find("dominance"), std::string::npos);
}

TEST(Invariants, ReportViolations) {
  auto s = spec2d({2});
  ReportRow r;
  r.n = 2;
  r.div_norm = 1e-3;
  r.uh_h1 = 1.0;
  r.velocity_bound_ok = false;
  r.rhs_velocity = 0.1;
  EXPECT_EQ(check_invariants(s, {r}).size(), 2u);
  s.solver = SolverKind::Ipm;
  r.div_norm = 1e-8;
  r.velocity_bound_ok = true;
  EXPECT_EQ(check_invariants(s, {r}).size(), 0u);
}

TEST(Csv, RoundTripWithEmptyCells) {
  std::vector<ReportRow> rows(2);
  rows[0].h = 0.5;
  rows[0].err_u_l2 = 0.123456789;
  rows[0].err_u_h1 = 2.0;
  rows[0].err_p_l2 = 3.0;
  rows[0].div_norm = 1e-15;
  rows[1] = rows[0];
  rows[1].h = 0.25;
  rows[1].rate_u_l2 = 2.0;
  rows[1].rate_u_h1 = 1.0;
  rows[1].rate_p_l2 = 1.0;
  rows[1].beta = 0.3;
  rows[1].time_s = 1.5;
  const std::string text = csv_of(rows);
  std::istringstream lines(text);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header, kCsvHeader);
  EXPECT_EQ(first, "5.0000e-01,1.2346e-01,,2.0000e+00,,3.0000e+00,,1.0000e-15,,");
  std::istringstream in(text);
  const auto back = parse_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].err_u_l2, 1.2346e-01);
  EXPECT_FALSE(back[0].rate_u_l2);
  EXPECT_FALSE(back[0].beta);
  EXPECT_DOUBLE_EQ(*back[1].beta, 0.3);
  EXPECT_DOUBLE_EQ(*back[1].time_s, 1.5);
  EXPECT_EQ(csv_of(back), text);
}

TEST(Csv, Errors) {
  EXPECT_THROW(csv_of({}), Error);
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in("h,err\n");
              parse_csv(in);
            }),
            1u);
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in(std::string(kCsvHeader) + "\n1,2,3\n");
              parse_csv(in);
            }),
            2u);
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in(std::string(kCsvHeader) + "\n\n1,2,,4,,6,,8,,\n1,x,,4,,6,,8,,\n");
              parse_csv(in);
            }),
            4u);
  std::istringstream empty("");
  EXPECT_THROW(parse_csv(empty), ParseError);
}

TEST(Tables, MissingValuesShowDashes) {
  std::vector<ReportRow> rows(1);
  rows[0].h = 0.5;
  const std::string t = emit_table(rows);
  EXPECT_NE(t.find("--"), std::string::npos);
  EXPECT_NE(t.find("5.0000e-01"), std::string::npos);
  EXPECT_THROW(emit_table({}), Error);
}

TEST(Config, ParseAndApply) {
  std::istringstream in(
      "# penalty settings\n"
      "solver = ipm\n"
      "ipm.rho = 50   # step\n"
      "\n"
      "ipm.maxit=200\n"
      "n = 2,4\n"
      "beta = yes\n"
      "quadrature.degree = 8\n");
  const auto entries = parse_config(in);
  ASSERT_EQ(entries.size(), 6u);
  EXPECT_EQ(entries[1].line, 3);
  EXPECT_EQ(entries[1].value, "50");
  ExperimentSpec s;
  apply_config(s, entries);
  EXPECT_EQ(s.solver, SolverKind::Ipm);
  EXPECT_EQ(s.ipm.rho, 50.0);
  EXPECT_EQ(s.ipm.max_iterations, 200);
  EXPECT_EQ(s.meshes, (std::vector<int>{2, 4}));
  EXPECT_TRUE(s.beta);
  EXPECT_EQ(s.quadrature_degree, 8);
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto apply = [](const std::string& text) {
    std::istringstream in(text);
    ExperimentSpec s;
    apply_config(s, parse_config(in));
  };
  EXPECT_EQ(parse_error_line([&] { apply("nu = 1\nbogus = 3\n"); }), 2u);
  EXPECT_EQ(parse_error_line([&] { apply("\n\nno equals sign\n"); }), 3u);
  EXPECT_EQ(parse_error_line([&] { apply("ipm.maxit = 2.5\n"); }), 1u);
  EXPECT_EQ(parse_error_line([&] { apply("nu = fast\n"); }), 1u);
  EXPECT_EQ(parse_error_line([&] { apply("beta = maybe\n"); }), 1u);
  EXPECT_EQ(parse_error_line([&] { apply("a=1\nsolver = lu\n"); }), 1u);
  EXPECT_EQ(parse_error_line([&] { apply("solver = lu\n"); }), 1u);
  EXPECT_EQ(parse_error_line([&] { apply("nu =\n"); }), 1u);
  EXPECT_THROW(parse_config_file("/nonexistent/config"), Error);
}

TEST(Timing, PenaltyAndReducedAgree) {
  auto s = spec2d({2, 4}, SolverKind::Ipm);
  const auto tab = timing_comparison(s);
  EXPECT_FALSE(tab.machine.empty());
  ASSERT_EQ(tab.rows.size(), 2u);
  for (const auto& r : tab.rows) {
    EXPECT_GT(r.ipm_iterations, 0);
    EXPECT_LE(r.ipm_div_norm, s.ipm.tol);
    EXPECT_LT(r.velocity_difference, 1e-5);
    EXPECT_GE(r.ipm_total_s(), r.ipm_solve_s);
  }
  EXPECT_NE(emit_timing_table(tab).find("machine:"), std::string::npos);
}
