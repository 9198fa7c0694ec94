// divfree: mesh generation, splitting, and Stokes experiments from the
// command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "divfree.hpp"

namespace {

using namespace divfree;

int cmd_mesh(int dim, int n, const std::string& out) {
  if (dim == 2)
    write_mesh(build_structured_square(n), out);
  else if (dim == 3)
    write_mesh(build_structured_cube(n), out);
  else
    throw Error("dimension must be 2 or 3");
  return 0;
}

template <int Dim>
int split_file(const std::string& in, const std::string& out, bool report) {
  const auto t = read_mesh<Dim>(in);
  const auto sm = split_mesh(t);
  std::ofstream os(out);
  if (!os) throw Error("cannot open '" + out + "' for writing");
  write_split(sm, os);
  if (report) {
    const auto checks = verify_singularity(sm);
    int bad = 0;
    for (const auto& c : checks) bad += c.pass ? 0 : 1;
    std::printf("coarse: %d cells, %d facets (%d interior)\n", t.num_cells(), t.num_facets(),
                t.num_interior_facets());
    std::printf("split:  %d cells, %d vertices\n", sm.mesh.num_cells(), sm.mesh.num_vertices());
    std::printf("split points: %d interior, %d boundary\n", sm.num_interior_groups(),
                sm.num_boundary_groups());
    std::printf("singular features: %zu checked, %d failed\n", checks.size(), bad);
    if (bad) return 2;
  }
  return 0;
}

int cmd_split(const std::string& in, const std::string& kind, const std::string& out, bool report) {
  const int dim = peek_mesh_dimension(in);
  if (kind == "ps" && dim != 2) throw Error("Powell-Sabin split needs a 2D mesh");
  if (kind == "wf" && dim != 3) throw Error("Worsey-Farin split needs a 3D mesh");
  return dim == 2 ? split_file<2>(in, out, report) : split_file<3>(in, out, report);
}

template <int Dim>
void dump_for_mesh(const ExperimentSpec& spec, int n, const std::string& matrices_dir,
                   const std::string& transform_path) {
  const auto ms = make_solution<Dim>(spec.problem, spec.nu);
  const auto d = discretize(build_structured<Dim>(n), ms, true, spec.quadrature_degree);
  if (!matrices_dir.empty()) {
    std::filesystem::create_directories(matrices_dir);
    const std::string base = matrices_dir + "/n" + std::to_string(n) + "_";
    write_coordinate(d.A, base + "A.txt");
    write_coordinate(d.Btilde, base + "Btilde.txt");
    write_coordinate(d.B, base + "B.txt");
    write_coordinate(d.Mp, base + "Mp.txt");
  }
  if (!transform_path.empty()) write_coordinate(d.transform.Z, transform_path);
}

void print_rows(const std::vector<ReportRow>& rows, bool bounds) {
  std::cout << emit_table(rows);
  if (bounds) std::cout << '\n' << emit_bounds_table(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Divergence-free P1/P0 Stokes on Powell-Sabin and Worsey-Farin splits"};
  app.require_subcommand(1);

  auto* mesh = app.add_subcommand("mesh", "write a structured mesh of the unit square or cube");
  int mesh_dim = 2, mesh_n = 4;
  std::string mesh_out;
  mesh->add_option("--dim", mesh_dim, "2 or 3")->check(CLI::IsMember({2, 3}));
  mesh->add_option("--n", mesh_n, "subdivisions per side")->check(CLI::PositiveNumber);
  mesh->add_option("--out", mesh_out, "output file")->required();

  auto* split = app.add_subcommand("split", "refine a mesh file");
  std::string split_in, split_out, split_kind = "ps";
  bool split_report = false;
  split->add_option("--in", split_in, "input mesh")->required()->check(CLI::ExistingFile);
  split->add_option("--kind", split_kind, "ps (2D) or wf (3D)")->check(CLI::IsMember({"ps", "wf"}));
  split->add_option("--out", split_out, "output split file")->required();
  split->add_flag("--report", split_report, "print counts and check every singular feature");

  auto* run = app.add_subcommand("run", "convergence study");
  auto* timing = app.add_subcommand("timing", "penalty iteration vs reduced system timings");
  int dim = 2;
  std::string problem = "ps2d", meshes = "4,8,16", solver = "direct", csv, bounds_csv, config;
  std::string dump_dir, dump_transform;
  double nu = 1.0;
  bool beta = false, bounds = false, check = false, timings = false, quiet = false;
  for (auto* sc : {run, timing}) {
    sc->add_option("--dim", dim, "2 or 3")->check(CLI::IsMember({2, 3}));
    sc->add_option("--problem", problem, "ps2d, wf3d or wf3d-curl");
    sc->add_option("--nu", nu, "viscosity");
    sc->add_option("--n", meshes, "comma-separated mesh sizes, strictly increasing");
    sc->add_option("--solver", solver, "direct, fgmres or ipm");
    sc->add_option("--config", config, "key = value file applied after the flags")
        ->check(CLI::ExistingFile);
  }
  run->add_flag("--beta", beta, "compute inf-sup constants");
  run->add_flag("--bounds", bounds, "best approximations and error-bound checks");
  run->add_flag("--timings", timings, "fill the time_s column");
  run->add_option("--csv", csv, "write the report as CSV");
  run->add_option("--bounds-csv", bounds_csv, "write the bound columns as CSV");
  run->add_flag("--check", check, "exit with status 2 if an invariant fails");
  run->add_option("--dump-matrices", dump_dir, "write A, Btilde, B, Mp per mesh to a directory");
  run->add_option("--dump-transform", dump_transform, "write Z of the last mesh");
  run->add_flag("--quiet", quiet, "no table on stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mesh->parsed()) return cmd_mesh(mesh_dim, mesh_n, mesh_out);
    if (split->parsed()) return cmd_split(split_in, split_kind, split_out, split_report);

    ExperimentSpec spec;
    spec.dim = dim;
    spec.problem = parse_problem(problem);
    spec.nu = nu;
    spec.meshes = parse_mesh_list(meshes);
    spec.solver = parse_solver(solver);
    spec.beta = beta;
    spec.bounds = bounds;
    spec.timings = timings;
    if (!config.empty()) apply_config(spec, parse_config_file(config));
    spec.validate();

    if (timing->parsed()) {
      std::cout << emit_timing_table(timing_comparison(spec));
      return 0;
    }

    std::vector<ReportRow> rows;
    try {
      rows = run_convergence_study(spec);
    } catch (const StudyError& e) {
      std::cerr << "error: " << e.what() << '\n';
      if (!e.partial().empty()) {
        if (!csv.empty()) emit_csv(e.partial(), csv);
        if (!quiet) print_rows(e.partial(), spec.bounds);
      }
      return 1;
    }
    if (!quiet) print_rows(rows, spec.bounds);
    if (!csv.empty()) emit_csv(rows, csv);
    if (!bounds_csv.empty()) {
      if (!spec.bounds) throw Error("--bounds-csv needs --bounds");
      emit_bounds_csv(rows, bounds_csv);
    }
    if (!dump_dir.empty() || !dump_transform.empty()) {
      for (std::size_t i = 0; i < spec.meshes.size(); ++i) {
        const bool last = i + 1 == spec.meshes.size();
        const std::string tpath = last ? dump_transform : std::string();
        if (dump_dir.empty() && tpath.empty()) continue;
        if (spec.dim == 2)
          dump_for_mesh<2>(spec, spec.meshes[i], dump_dir, tpath);
        else
          dump_for_mesh<3>(spec, spec.meshes[i], dump_dir, tpath);
      }
    }
    if (check) {
      const auto bad = check_invariants(spec, rows);
      for (const auto& b : bad) std::cerr << "violation: " << b << '\n';
      if (!bad.empty()) return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
