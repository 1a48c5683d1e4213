#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pucpi/cover.hpp"
#include "pucpi/global_reduce.hpp"
#include "pucpi/runtime.hpp"

namespace pucpi {

struct RunConfig {
  std::string mesh_file;
  int square = 0;  ///< structured unit square with this many cells per side
  int cube = 0;    ///< structured unit cube
  std::string map = "identity";
  double lambda = 0.0;
  int modes = 0;                ///< alternative to lambda: lowest `modes` eigenvalues
  double lambda_margin = 0.05;  ///< Lambda = lambda_modes (1 + margin)
  int N = 5;
  double eta = 2.5;
  int M = 4;
  double radius_factor = 0.2;
  double tol = 1e-2;
  std::uint64_t seed = 1;
  std::string mode = "inproc";
  int workers = 1;
  int retries = 2;
  std::filesystem::path workdir = "pucpi_work";
  std::filesystem::path report_dir;
  std::filesystem::path labels_file;
  bool strict_layers = false;
  bool reference = false;  ///< compare against a full-pencil reference solve
  int compare = -1;        ///< modes to compare (default: modes, else all below Lambda)
  int dense_cap = 3000;
  std::filesystem::path worker_executable;

  /// Throws Error("cli") naming the violated requirement.
  void validate() const;
  std::vector<std::pair<std::string, std::string>> echo() const;
  SpectralConfig spectral(double Lambda) const;
};

MeshTopology make_mesh(const RunConfig& cfg);
CoverPlan make_cover(const RunConfig& cfg, const MeshTopology& mesh);

/// Eigenvalues of the full pencil: all <= Lambda (count < 0) or the `count` smallest, by
/// shift-invert Lanczos at tolerance 1e-10.
std::vector<double> reference_eigenvalues(const MeshTopology& mesh, double Lambda, int count, std::uint64_t seed);

/// Lambda from the config; with --modes K, from a reference solve of the K lowest eigenvalues,
/// which are returned in `reference`.
double resolve_lambda(const RunConfig& cfg, const MeshTopology& mesh, std::vector<double>* reference);

/// Full pipeline through the runtime; writes the report when report_dir is set.
SolveReport run_solve(const RunConfig& cfg);

struct TolStudyRow {
  double tol = 0.0;
  int reduced_dofs = 0;
  double max_rel = 0.0;
  int missing = 0;
  std::vector<double> eigenvalues;
};

/// One reduced solve per tolerance; local factorizations and singular vectors are computed once
/// at the smallest tolerance and truncated per tolerance.
std::vector<TolStudyRow> run_tol_study(const RunConfig& cfg, const std::vector<double>& tols,
                                       std::vector<double>* reference = nullptr);

struct RadiusStudyRow {
  double factor = 0.0;
  int extended_dofs = 0;
  int first_below = -1;  ///< 1-based index of the first sigma below the threshold, -1 if none
  std::vector<double> sigma;
};

std::vector<RadiusStudyRow> run_radius_study(const RunConfig& cfg, const std::vector<double>& factors,
                                             int subdomain = 0, int count = 200, double threshold = 1e-6);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Invariant suites of every module on small generated fixtures. With `inject_corruption` a task
/// file is tampered with after planning, which the runtime digest check must catch.
std::vector<CheckResult> run_validate(std::uint64_t seed, bool inject_corruption,
                                      const std::filesystem::path& workdir);

void write_tol_study(const std::filesystem::path& path, const std::vector<TolStudyRow>& rows);
void write_radius_study(const std::filesystem::path& dir, const std::vector<RadiusStudyRow>& rows);

}  // namespace pucpi
