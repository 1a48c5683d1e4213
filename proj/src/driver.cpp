#include "pucpi/driver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "pucpi/common.hpp"
#include "pucpi/fem.hpp"
#include "pucpi/lanczos.hpp"
#include "pucpi/task_io.hpp"

namespace fs = std::filesystem;

namespace pucpi {

namespace {

std::vector<int> all_cells(const MeshTopology& mesh) {
  std::vector<int> cells(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) cells[c] = c;
  return cells;
}

StiffnessMass global_system(const MeshTopology& mesh, GlobalDofs& gd) {
  gd = build_global_dofs(mesh);
  return assemble(mesh, all_cells(mesh), gd.dof_of_vertex, gd.size());
}

/// Leading `k` retained singular triplets of a truncation computed at a smaller tolerance.
Truncation prefix(const Truncation& full, double tol) {
  Truncation t;
  while (t.k < full.k && full.sigma[t.k] > tol) ++t.k;
  t.sigma.assign(full.sigma.begin(), full.sigma.begin() + t.k);
  t.tail = t.k < full.k ? full.sigma[t.k] : full.tail;
  t.C = full.C.leftCols(t.k);
  return t;
}

int compare_count(const RunConfig& cfg, const std::vector<double>& ref) {
  if (cfg.compare > 0) return cfg.compare;
  if (cfg.modes > 0) return cfg.modes;
  return static_cast<int>(ref.size());
}

}  // namespace

void RunConfig::validate() const {
  const int sources = (!mesh_file.empty()) + (square > 0) + (cube > 0);
  if (sources != 1) throw Error("cli", "exactly one of --mesh, --square, --cube is required");
  if ((lambda > 0) == (modes > 0))
    throw Error("cli", "exactly one of --lambda (> 0) and --modes (>= 1) is required");
  if (!(eta > 1.0)) throw Error("cli", concat("--eta must satisfy eta > 1, got ", eta));
  if (N < 1) throw Error("cli", concat("--interp-points must be >= 1, got ", N));
  if (M < 2) throw Error("cli", concat("--subdomains must be >= 2, got ", M));
  if (!(tol > 0)) throw Error("cli", concat("--tol must be > 0, got ", tol));
  if (!(radius_factor >= 0)) throw Error("cli", concat("--radius-factor must be >= 0, got ", radius_factor));
  if (!(lambda_margin >= 0)) throw Error("cli", "--lambda-margin must be >= 0");
  if (workers < 1) throw Error("cli", "--workers must be >= 1");
  if (retries < 0) throw Error("cli", "--retries must be >= 0");
  if (map != "identity" && map != "paper-cube") throw Error("cli", concat("unknown --map '", map, "'"));
  parse_mode(mode);
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  if (!mesh_file.empty()) e.emplace_back("mesh", mesh_file);
  if (square > 0) e.emplace_back("square", std::to_string(square));
  if (cube > 0) e.emplace_back("cube", std::to_string(cube));
  e.emplace_back("map", map);
  if (lambda > 0) e.emplace_back("lambda", format_exact(lambda));
  if (modes > 0) {
    e.emplace_back("modes", std::to_string(modes));
    e.emplace_back("lambda_margin", format_exact(lambda_margin));
  }
  e.emplace_back("interp_points", std::to_string(N));
  e.emplace_back("eta", format_exact(eta));
  e.emplace_back("subdomains", std::to_string(M));
  e.emplace_back("radius_factor", format_exact(radius_factor));
  e.emplace_back("tol", format_exact(tol));
  e.emplace_back("seed", std::to_string(seed));
  e.emplace_back("mode", mode);
  e.emplace_back("retries", std::to_string(retries));
  e.emplace_back("layer_policy", strict_layers ? "strict" : "enforce");
  if (!labels_file.empty()) e.emplace_back("labels", labels_file.string());
  e.emplace_back("reference", reference ? "yes" : "no");
  e.emplace_back("dense_cap", std::to_string(dense_cap));
  return e;
}

SpectralConfig RunConfig::spectral(double Lambda) const {
  SpectralConfig s;
  s.Lambda = Lambda;
  s.eta = eta;
  s.N = N;
  s.tol = tol;
  s.radius_factor = radius_factor;
  return s;
}

MeshTopology make_mesh(const RunConfig& cfg) {
  MeshTopology mesh;
  if (!cfg.mesh_file.empty()) mesh = read_mesh_file(cfg.mesh_file);
  else if (cfg.square > 0) mesh = build_structured_mesh(2, cfg.square);
  else mesh = build_structured_mesh(3, cfg.cube);
  if (cfg.map != "identity") mesh = map_domain(mesh, cfg.map);
  validate_mesh(mesh);
  return mesh;
}

CoverPlan make_cover(const RunConfig& cfg, const MeshTopology& mesh) {
  CoverOptions o;
  o.M = cfg.M;
  o.seed = cfg.seed;
  o.radius_factor = cfg.radius_factor;
  o.policy = cfg.strict_layers ? LayerPolicy::strict : LayerPolicy::enforce;
  if (!cfg.labels_file.empty()) o.labels = read_partition_labels(cfg.labels_file);
  return build_cover(mesh, o);
}

std::vector<double> reference_eigenvalues(const MeshTopology& mesh, double Lambda, int count, std::uint64_t seed) {
  GlobalDofs gd;
  const StiffnessMass sm = global_system(mesh, gd);
  SmallestOptions o;
  o.tol = 1e-10;
  o.seed = seed;
  if (count >= 0) o.count = count;
  else o.threshold = Lambda;
  return smallest_eigenpairs(sm.A, sm.M, o).values;
}

double resolve_lambda(const RunConfig& cfg, const MeshTopology& mesh, std::vector<double>* reference) {
  if (cfg.lambda > 0) return cfg.lambda;
  std::vector<double> ref = reference_eigenvalues(mesh, 0.0, cfg.modes, cfg.seed);
  if (static_cast<int>(ref.size()) < cfg.modes)
    throw Error("cli", concat("the problem has only ", ref.size(), " eigenvalues"));
  const double Lambda = ref.back() * (1.0 + cfg.lambda_margin);
  if (reference) *reference = std::move(ref);
  return Lambda;
}

SolveReport run_solve(const RunConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, double>> stages;
  Stopwatch sw;
  const MeshTopology mesh = make_mesh(cfg);
  stages.emplace_back("mesh", sw.seconds());
  sw.reset();
  std::vector<double> ref;
  const double Lambda = resolve_lambda(cfg, mesh, &ref);
  stages.emplace_back("resolve_lambda", sw.seconds());
  sw.reset();
  const CoverPlan plan = make_cover(cfg, mesh);
  stages.emplace_back("cover", sw.seconds());
  sw.reset();
  auto echo = cfg.echo();
  echo.emplace_back("resolved_lambda", format_exact(Lambda));
  TaskManifest m = plan_and_serialize(mesh, plan, cfg.spectral(Lambda), cfg.seed, cfg.workdir, echo);
  stages.emplace_back("plan", sw.seconds());
  sw.reset();
  ExecuteOptions eo;
  eo.mode = parse_mode(cfg.mode);
  eo.workers = cfg.workers;
  eo.retries = cfg.retries;
  eo.worker_executable = cfg.worker_executable;
  m = execute(std::move(m), eo);
  stages.emplace_back("execute", sw.seconds());
  if (!m.complete()) {
    for (const auto& t : m.tasks)
      if (t.status != TaskStatus::done)
        throw Error("runtime", concat("run incomplete: subdomain ", t.subdomain, " failed after ", t.attempts, " attempts"));
  }
  GatherOptions go;
  go.dense_cap = cfg.dense_cap;
  go.seed = cfg.seed;
  SolveReport rep = gather_and_solve(m, go);
  if (cfg.reference) {
    sw.reset();
    if (ref.empty()) ref = reference_eigenvalues(mesh, Lambda, -1, cfg.seed);
    stages.emplace_back("reference", sw.seconds());
    rep.reference = ref;
    rep.compare_count = compare_count(cfg, ref);
    rep.comparison = compare_spectra(rep.eigenvalues, ref, rep.compare_count);
  }
  rep.timings.insert(rep.timings.begin(), stages.begin(), stages.end());
  if (!cfg.report_dir.empty()) write_report(cfg.report_dir, rep);
  return rep;
}

std::vector<TolStudyRow> run_tol_study(const RunConfig& cfg, const std::vector<double>& tols,
                                       std::vector<double>* reference) {
  cfg.validate();
  if (tols.empty()) throw Error("cli", "empty tolerance list");
  const MeshTopology mesh = make_mesh(cfg);
  std::vector<double> ref;
  const double Lambda = resolve_lambda(cfg, mesh, &ref);
  if (ref.empty()) ref = reference_eigenvalues(mesh, Lambda, -1, cfg.seed);
  const CoverPlan plan = make_cover(cfg, mesh);
  const double tmin = *std::min_element(tols.begin(), tols.end());
  RunConfig c = cfg;
  c.tol = tmin;
  std::vector<std::vector<LocalBasisResult>> results(tols.size(), std::vector<LocalBasisResult>(plan.M));
  for (int p = 0; p < plan.M; ++p) {
    const LocalTask task = make_local_task(mesh, plan, p, c.spectral(Lambda), task_seed(cfg.seed, p));
    const LocalSubspace ls(task);
    const Truncation full = ls.truncate(tmin);
    for (size_t i = 0; i < tols.size(); ++i) results[i][p] = ls.build(prefix(full, tols[i]));
  }
  std::vector<TolStudyRow> rows;
  for (size_t i = 0; i < tols.size(); ++i) {
    const ReducedProblem rp = assemble_reduced(mesh, results[i]);
    const ReducedSolution sol = solve_reduced(rp, Lambda, cfg.dense_cap, cfg.seed);
    const SpectrumComparison sc = compare_spectra(sol.values, ref, compare_count(cfg, ref));
    rows.push_back({tols[i], rp.size, sc.max_rel, sc.missing, sol.values});
  }
  if (reference) *reference = ref;
  return rows;
}

std::vector<RadiusStudyRow> run_radius_study(const RunConfig& cfg, const std::vector<double>& factors,
                                             int subdomain, int count, double threshold) {
  cfg.validate();
  if (subdomain < 0 || subdomain >= cfg.M) throw Error("cli", concat("subdomain index ", subdomain, " out of range"));
  const MeshTopology mesh = make_mesh(cfg);
  const double Lambda = resolve_lambda(cfg, mesh, nullptr);
  std::vector<RadiusStudyRow> rows;
  for (double f : factors) {
    RunConfig c = cfg;
    c.radius_factor = f;
    const CoverPlan plan = make_cover(c, mesh);
    const LocalTask task =
        make_local_task(mesh, plan, subdomain, c.spectral(Lambda), task_seed(cfg.seed, subdomain));
    const LocalSubspace ls(task);
    RadiusStudyRow row;
    row.factor = f;
    row.extended_dofs = ls.ext_dofs().size();
    row.sigma = ls.singular_values(count);
    for (size_t k = 0; k < row.sigma.size(); ++k)
      if (row.sigma[k] < threshold) {
        row.first_below = static_cast<int>(k) + 1;
        break;
      }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_tol_study(const fs::path& path, const std::vector<TolStudyRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cli", concat("cannot write ", path.string()));
  os << "tol,reduced_dofs,max_rel_error,missing_modes\n";
  for (const auto& r : rows)
    os << format_exact(r.tol) << ',' << r.reduced_dofs << ',' << format_exact(r.max_rel) << ',' << r.missing << '\n';
}

void write_radius_study(const fs::path& dir, const std::vector<RadiusStudyRow>& rows) {
  fs::create_directories(dir);
  std::ofstream curve(dir / "sigma_decay.csv"), summary(dir / "radius_summary.csv");
  if (!curve || !summary) throw Error("cli", concat("cannot write into ", dir.string()));
  curve << "factor,index,sigma\n";
  summary << "factor,extended_dofs,first_index_below_threshold\n";
  for (const auto& r : rows) {
    for (size_t k = 0; k < r.sigma.size(); ++k)
      curve << format_exact(r.factor) << ',' << k + 1 << ',' << format_exact(r.sigma[k]) << '\n';
    summary << format_exact(r.factor) << ',' << r.extended_dofs << ',' << r.first_below << '\n';
  }
}

std::vector<CheckResult> run_validate(std::uint64_t seed, bool inject_corruption, const fs::path& workdir) {
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, auto&& body) {
    CheckResult r{name, false, ""};
    try {
      r.detail = body();
      r.pass = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    out.push_back(r);
  };

  const MeshTopology square = build_structured_mesh(2, 12);
  RunConfig cfg;
  cfg.square = 12;
  cfg.M = 3;
  cfg.seed = seed;
  cfg.modes = 6;
  cfg.tol = 1e-3;
  cfg.radius_factor = 0.3;

  check("mesh.structured", [&]() -> std::string {
    validate_mesh(square);
    validate_mesh(build_structured_mesh(3, 3));
    validate_mesh(map_domain(build_structured_mesh(3, 3), "paper-cube"));
    if (std::abs(mesh_volume(square) - 1.0) > 1e-12) return "unit square volume differs from 1";
    return "";
  });

  CoverPlan plan;
  check("cover.invariants", [&]() -> std::string {
    plan = make_cover(cfg, square);
    validate_cover(square, plan);
    return "";
  });

  check("fem.partition_of_unity", [&]() -> std::string {
    const GlobalDofs gd = build_global_dofs(square);
    SpMat sum(gd.size(), gd.size());
    for (int p = 0; p < plan.M; ++p) {
      const auto& map = plan.subdomain_dofs[p];
      sum += stitching_matrix(map, owned_mask(map, plan.owner, p), gd) * restriction_matrix(map, gd);
    }
    SpMat I(gd.size(), gd.size());
    I.setIdentity();
    const double defect = Mat(sum - I).cwiseAbs().maxCoeff();
    return defect == 0.0 ? "" : concat("sum of stitched restrictions differs from I by ", defect);
  });

  check("fem.symmetry", [&]() -> std::string {
    GlobalDofs gd;
    const StiffnessMass sm = global_system(square, gd);
    if ((sm.A - SpMat(sm.A.transpose())).norm() != 0.0) return "stiffness not exactly symmetric";
    if ((sm.M - SpMat(sm.M.transpose())).norm() != 0.0) return "mass not exactly symmetric";
    Eigen::SimplicialLLT<SpMat> llt(sm.M);
    if (llt.info() != Eigen::Success) return "mass not positive definite";
    return "";
  });

  check("eigcore.inertia", [&]() -> std::string {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 6 + trial % 5;
      Mat X(n, n), Y(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) X(i, j) = g(rng), Y(i, j) = g(rng);
      const Mat A = X * X.transpose();
      const Mat Mm = Y * Y.transpose() + n * Mat::Identity(n, n);
      Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(A, Mm, Eigen::EigenvaluesOnly);
      const double t = 0.5 * (es.eigenvalues()[n / 2] + es.eigenvalues()[n / 2 - 1]);
      const InertiaResult in = ldlt_inertia(A.sparseView(), Mm.sparseView(), t);
      if (in.count_below != n / 2) return concat("trial ", trial, ": inertia ", in.count_below, " vs ", n / 2);
    }
    return "";
  });

  double Lambda = 0.0;
  std::vector<double> ref;
  check("local.invariants", [&]() -> std::string {
    Lambda = resolve_lambda(cfg, square, &ref);
    const LocalTask task = make_local_task(square, plan, 0, cfg.spectral(Lambda), task_seed(seed, 0));
    const LocalSubspace ls(task);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Vec w(ls.n_B());
    for (auto& x : w) x = g(rng);
    for (size_t i = 0; i < ls.nodes().size(); ++i) {
      const Vec z = ls.apply_Zh_node(static_cast<int>(i), w);
      const Vec proj = ls.modes().vectors.transpose() * (ls.M_II() * z);
      if (proj.size() && proj.cwiseAbs().maxCoeff() > 1e-8 * z.norm()) return "deflated solution not orthogonal to modes";
    }
    const Truncation tr = ls.truncate(cfg.tol);
    for (int k = 1; k < tr.k; ++k)
      if (tr.sigma[k] > tr.sigma[k - 1] * (1 + 1e-12)) return "singular values not descending";
    if (tr.k >= 1 && !(tr.tail <= cfg.tol && cfg.tol < tr.sigma[tr.k - 1])) return "cutoff contract violated";
    const LocalBasisResult res = ls.build(tr);
    for (double d : res.d)
      if (!(d > 0)) return "nonpositive local Ritz value";
    return "";
  });

  check("reduce.structure", [&]() -> std::string {
    std::vector<LocalBasisResult> results;
    for (int p = 0; p < plan.M; ++p)
      results.push_back(compute_local_basis(make_local_task(square, plan, p, cfg.spectral(Lambda), task_seed(seed, p))));
    const ReducedProblem rp = assemble_reduced(square, results);
    if ((rp.A - SpMat(rp.A.transpose())).norm() != 0.0 || (rp.M - SpMat(rp.M.transpose())).norm() != 0.0)
      return "reduced pencil not exactly symmetric";
    const ReducedSolution sol = solve_reduced(rp, Lambda);
    if (!sol.count_matches) return "reduced eigenvalue count not certified by inertia";
    for (size_t j = 0; j < std::min(sol.values.size(), ref.size()); ++j)
      if (sol.values[j] < ref[j] * (1 - 1e-12)) return concat("Ritz value ", j + 1, " below the reference");
    if (sol.values.size() < ref.size()) return "reduced solve misses reference modes";
    return "";
  });

  check("runtime.digests", [&]() -> std::string {
    TaskManifest m = plan_and_serialize(square, plan, cfg.spectral(Lambda), seed, workdir, cfg.echo());
    m = execute(std::move(m), ExecuteOptions{});
    if (inject_corruption) {
      std::ofstream os(m.path(task_input_path(0).string()), std::ios::app);
      os << "# corrupted\n";
    }
    gather(m);
    return "";
  });
  return out;
}

}  // namespace pucpi
