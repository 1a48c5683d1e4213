#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "pucpi/common.hpp"
#include "pucpi/driver.hpp"
#include "pucpi/runtime.hpp"

using namespace pucpi;

namespace {

void add_problem_options(CLI::App* app, RunConfig& c) {
  app->add_option("--mesh", c.mesh_file, "pucpi-mesh file");
  app->add_option("--square", c.square, "structured unit square, cells per side");
  app->add_option("--cube", c.cube, "structured unit cube, cells per side");
  app->add_option("--map", c.map, "vertex map: identity | paper-cube");
  app->add_option("--lambda", c.lambda, "spectral cutoff Lambda");
  app->add_option("--modes", c.modes, "target the K lowest eigenvalues instead of --lambda");
  app->add_option("--lambda-margin", c.lambda_margin, "relative margin above lambda_K with --modes");
  app->add_option("--seed", c.seed, "seed for partitioning and Lanczos starts");
}

void add_method_options(CLI::App* app, RunConfig& c) {
  app->add_option("--interp-points", c.N, "number of Chebyshev interpolation points N");
  app->add_option("--eta", c.eta, "oversampling parameter (> 1)");
  app->add_option("--subdomains", c.M, "number of subdomains M (>= 2)");
  app->add_option("--radius-factor", c.radius_factor, "extension radius relative to the subdomain radius");
  app->add_option("--tol", c.tol, "singular value cutoff");
  app->add_option("--labels", c.labels_file, "vertex partition labels, one per line");
  app->add_flag("--strict-layers", c.strict_layers, "reject radii that do not reach two cell layers");
  app->add_option("--dense-cap", c.dense_cap, "largest reduced order solved densely");
}

void print_spectrum(const SolveReport& r) {
  std::printf("%6s %24s %24s %12s\n", "index", "lambda", "lambda_ref", "rel_error");
  for (size_t j = 0; j < r.eigenvalues.size(); ++j) {
    std::printf("%6zu %24.16e ", j + 1, r.eigenvalues[j]);
    if (j < r.reference.size()) std::printf("%24.16e ", r.reference[j]);
    else std::printf("%24s ", "");
    if (j < r.comparison.rel.size()) std::printf("%12.4e", r.comparison.rel[j]);
    std::printf("\n");
  }
  std::printf("full dofs %d, reduced dofs %d, fill-in %.3f%%\n", r.full_dofs, r.reduced_dofs, 100.0 * r.fill_in());
  if (!r.reference.empty())
    std::printf("max relative error over %zu modes: %.6e (missing %d)\n", r.comparison.rel.size(),
                r.comparison.max_rel, r.comparison.missing);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed eigenvalue solver for the Dirichlet Laplacian on overlapping subdomains"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress output on stderr");

  RunConfig cfg;
  auto* solve = app.add_subcommand("solve", "run the full pipeline and write a report");
  add_problem_options(solve, cfg);
  add_method_options(solve, cfg);
  solve->add_option("--mode", cfg.mode, "inproc | pool | dirqueue");
  solve->add_option("--workers", cfg.workers, "worker count (PUCPI_WORKERS overrides)");
  solve->add_option("--retries", cfg.retries, "extra attempts per failed task");
  solve->add_option("--workdir", cfg.workdir, "task exchange directory");
  solve->add_option("--report", cfg.report_dir, "report directory");
  solve->add_flag("--reference", cfg.reference, "compare against a full reference solve");
  solve->add_option("--compare", cfg.compare, "number of modes to compare");

  std::string ref_out;
  int max_dofs = 200000;
  auto* reference = app.add_subcommand("reference", "reference spectrum of the full pencil");
  add_problem_options(reference, cfg);
  reference->add_option("--output", ref_out, "CSV file (index,lambda); stdout when omitted");
  reference->add_option("--max-dofs", max_dofs, "refuse problems above this size");

  std::vector<double> tols{1e-1, 1e-2, 1e-3};
  std::string study_out;
  auto* tol_study = app.add_subcommand("tol-study", "reduced error against the singular value cutoff");
  add_problem_options(tol_study, cfg);
  add_method_options(tol_study, cfg);
  tol_study->add_option("--tols", tols, "cutoffs to sweep");
  tol_study->add_option("--output", study_out, "CSV file")->required();
  tol_study->add_option("--compare", cfg.compare, "number of modes to compare");

  std::vector<double> factors{0.2, 0.6, 1.0};
  int sub_index = 0, sigma_count = 200;
  auto* radius_study = app.add_subcommand("radius-study", "singular value decay against the extension radius");
  add_problem_options(radius_study, cfg);
  add_method_options(radius_study, cfg);
  radius_study->add_option("--factors", factors, "radius factors to sweep");
  radius_study->add_option("--subdomain-index", sub_index, "subdomain to study");
  radius_study->add_option("--count", sigma_count, "singular values per factor");
  radius_study->add_option("--output", study_out, "output directory")->required();

  bool inject = false;
  std::string validate_dir = "pucpi_validate";
  std::uint64_t validate_seed = 1;
  auto* validate = app.add_subcommand("validate", "run the invariant suites on generated fixtures");
  validate->add_option("--seed", validate_seed, "fixture seed");
  validate->add_flag("--inject-corruption", inject, "tamper with a task file after planning");
  validate->add_option("--workdir", validate_dir, "scratch directory");

  std::string task_in, task_out, task_digest;
  auto* run_task = app.add_subcommand("run-task", "worker: compute one local basis");
  run_task->add_option("--input", task_in, "task file")->required();
  run_task->add_option("--output", task_out, "result file")->required();
  run_task->add_option("--digest", task_digest, "expected input digest");

  std::string worker_dir;
  auto* worker = app.add_subcommand("worker", "directory-queue worker: process ready tasks until none is left");
  worker->add_option("--workdir", worker_dir, "shared task exchange directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (verbose) log::set_level(log::Level::info);

  try {
    if (*solve) {
      const SolveReport r = run_solve(cfg);
      print_spectrum(r);
      if (!r.count_matches) return 1;
      if (!r.reference.empty() && r.comparison.missing > 0) return 1;
    } else if (*reference) {
      const MeshTopology mesh = make_mesh(cfg);
      const int dofs = build_global_dofs(mesh).size();
      if (dofs > max_dofs)
        throw Error("cli", concat("reference solve of ", dofs, " DOFs exceeds the single-process budget of ", max_dofs));
      if ((cfg.lambda > 0) == (cfg.modes > 0)) throw Error("cli", "exactly one of --lambda and --modes is required");
      const auto vals = cfg.modes > 0 ? reference_eigenvalues(mesh, 0.0, cfg.modes, cfg.seed)
                                      : reference_eigenvalues(mesh, cfg.lambda, -1, cfg.seed);
      std::ofstream file;
      if (!ref_out.empty()) file.open(ref_out);
      std::ostream& os = ref_out.empty() ? std::cout : file;
      os << "index,lambda\n";
      for (size_t j = 0; j < vals.size(); ++j) os << j + 1 << ',' << format_exact(vals[j]) << '\n';
    } else if (*tol_study) {
      const auto rows = run_tol_study(cfg, tols);
      write_tol_study(study_out, rows);
      for (const auto& r : rows)
        std::printf("tol %.1e: reduced dofs %d, max rel error %.6e\n", r.tol, r.reduced_dofs, r.max_rel);
    } else if (*radius_study) {
      const auto rows = run_radius_study(cfg, factors, sub_index, sigma_count);
      write_radius_study(study_out, rows);
      for (const auto& r : rows)
        std::printf("factor %.2f: extended dofs %d, first sigma below 1e-6 at %d\n", r.factor, r.extended_dofs,
                    r.first_below);
    } else if (*validate) {
      const auto checks = run_validate(validate_seed, inject, validate_dir);
      bool ok = true;
      for (const auto& c : checks) {
        std::printf("%-24s %s%s%s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.detail.empty() ? "" : "  ",
                    c.detail.c_str());
        ok = ok && c.pass;
      }
      return ok ? 0 : 1;
    } else if (*run_task) {
      std::printf("%s\n", run_task_file(task_in, task_out, task_digest).c_str());
    } else if (*worker) {
      const int n = run_queue_worker(worker_dir);
      std::printf("completed %d tasks\n", n);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
