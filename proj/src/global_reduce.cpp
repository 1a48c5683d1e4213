#include "pucpi/global_reduce.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "pucpi/common.hpp"
#include "pucpi/eigcore.hpp"
#include "pucpi/lanczos.hpp"

namespace pucpi {

namespace {

/// Per-subdomain values of the basis at the vertices of each overlap cell it lists.
struct CellValues {
  std::map<int, int> slot;  ///< global cell -> block index
  Mat V;                    ///< (d+1) rows per listed cell, n columns
};

CellValues cell_values(const MeshTopology& mesh, const LocalBasisResult& r) {
  const int nloc = mesh.dim + 1;
  std::map<int, int> vrow;
  for (size_t g = 0; g < r.gamma_vertices.size(); ++g) vrow[r.gamma_vertices[g]] = static_cast<int>(g);
  CellValues cv;
  cv.V = Mat::Zero(nloc * r.gamma_cells.size(), r.n);
  for (size_t s = 0; s < r.gamma_cells.size(); ++s) {
    const int c = r.gamma_cells[s];
    cv.slot[c] = static_cast<int>(s);
    const auto cell = mesh.cell(c);
    for (int a = 0; a < nloc; ++a) {
      auto it = vrow.find(cell[a]);
      if (it != vrow.end()) cv.V.row(nloc * s + a) = r.gamma_values.row(it->second);
    }
  }
  return cv;
}

}  // namespace

ReducedProblem assemble_reduced(const MeshTopology& mesh, const std::vector<LocalBasisResult>& results) {
  const int P = static_cast<int>(results.size());
  const int nloc = mesh.dim + 1;
  ReducedProblem rp;
  rp.offset.assign(P + 1, 0);
  for (int p = 0; p < P; ++p) {
    if (results[p].subdomain != p)
      throw Error("reduce", concat("missing result for subdomain ", p));
    if (static_cast<int>(results[p].d.size()) != results[p].n ||
        results[p].gamma_values.rows() != static_cast<Eigen::Index>(results[p].gamma_vertices.size()) ||
        results[p].gamma_values.cols() != results[p].n ||
        results[p].gamma_cell_volumes.size() != results[p].gamma_cells.size())
      throw Error("reduce", concat("inconsistent result dimensions for subdomain ", p));
    rp.offset[p + 1] = rp.offset[p] + results[p].n;
  }
  rp.size = rp.offset[P];

  // Element matrices of every listed overlap cell; stored volumes must match the geometry.
  std::map<int, std::vector<int>> listed;  // cell -> subdomains listing it
  for (int p = 0; p < P; ++p)
    for (size_t s = 0; s < results[p].gamma_cells.size(); ++s) {
      const int c = results[p].gamma_cells[s];
      if (c < 0 || c >= mesh.num_cells())
        throw Error("reduce", concat("subdomain ", p, " lists invalid overlap cell ", c));
      const double vol = std::abs(signed_cell_volume(mesh, c));
      if (std::abs(vol - results[p].gamma_cell_volumes[s]) > 1e-12 * vol)
        throw Error("reduce", concat("overlap cell ", c, " of subdomain ", p, " has inconsistent geometry"));
      listed[c].push_back(p);
    }

  std::vector<CellValues> cv(P);
  for (int p = 0; p < P; ++p) cv[p] = cell_values(mesh, results[p]);

  std::map<std::pair<int, int>, std::vector<int>> shared;  // (q, p), q < p
  for (const auto& [c, ps] : listed)
    for (size_t i = 0; i < ps.size(); ++i)
      for (size_t j = 0; j < i; ++j) shared[{ps[j], ps[i]}].push_back(c);

  std::vector<Eigen::Triplet<double>> ta, tm;
  for (int p = 0; p < P; ++p)
    for (int l = 0; l < results[p].n; ++l) {
      ta.emplace_back(rp.row(p, l), rp.row(p, l), results[p].d[l]);
      tm.emplace_back(rp.row(p, l), rp.row(p, l), 1.0);
    }

  for (const auto& [pair, cells] : shared) {
    const auto [q, p] = pair;
    if (results[p].n == 0 || results[q].n == 0) continue;
    const int nc = static_cast<int>(cells.size());
    // Stacked per-cell values: X from p, Y from q; entries = X^T blockdiag(K_c) Y.
    Mat X(nloc * nc, results[p].n), KY(nloc * nc, results[q].n), MY(nloc * nc, results[q].n);
    for (int s = 0; s < nc; ++s) {
      const int c = cells[s];
      X.middleRows(nloc * s, nloc) = cv[p].V.middleRows(nloc * cv[p].slot.at(c), nloc);
      const auto Yc = cv[q].V.middleRows(nloc * cv[q].slot.at(c), nloc);
      double Ke[4][4], Me[4][4];
      element_matrices(element_geometry(mesh, c), mesh.dim, Ke, Me);
      Mat Kc(nloc, nloc), Mc(nloc, nloc);
      for (int a = 0; a < nloc; ++a)
        for (int b = 0; b < nloc; ++b) {
          Kc(a, b) = Ke[a][b];
          Mc(a, b) = Me[a][b];
        }
      KY.middleRows(nloc * s, nloc) = Kc * Yc;
      MY.middleRows(nloc * s, nloc) = Mc * Yc;
    }
    const Mat Apq = X.transpose() * KY;
    const Mat Mpq = X.transpose() * MY;
    rp.coupled_pairs.emplace_back(q, p);
    for (int l = 0; l < results[p].n; ++l)
      for (int m = 0; m < results[q].n; ++m) {
        const int i = rp.row(p, l), j = rp.row(q, m);
        if (Apq(l, m) != 0.0) {
          ta.emplace_back(i, j, Apq(l, m));
          ta.emplace_back(j, i, Apq(l, m));
        }
        if (Mpq(l, m) != 0.0) {
          tm.emplace_back(i, j, Mpq(l, m));
          tm.emplace_back(j, i, Mpq(l, m));
        }
      }
  }
  rp.A.resize(rp.size, rp.size);
  rp.M.resize(rp.size, rp.size);
  rp.A.setFromTriplets(ta.begin(), ta.end());
  rp.M.setFromTriplets(tm.begin(), tm.end());
  return rp;
}

ReducedSolution solve_reduced(const ReducedProblem& rp, double Lambda, int dense_cap, std::uint64_t seed) {
  if (rp.size == 0) throw Error("reduce", "reduced problem is empty");
  {
    Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> llt(rp.M);
    if (llt.info() != Eigen::Success)
      throw Error("reduce", "reduced mass matrix is not positive definite (rank filtering failed upstream)");
  }
  ReducedSolution sol;
  if (rp.size <= dense_cap) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(rp.A), Mat(rp.M), Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw Error("reduce", "dense reduced eigensolver failed");
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      if (es.eigenvalues()[i] <= Lambda) sol.values.push_back(es.eigenvalues()[i]);
    sol.method = "dense";
  } else {
    SmallestOptions opt;
    opt.threshold = Lambda;
    opt.seed = seed;
    opt.perturbation = 1e-8 * Lambda;
    sol.values = smallest_eigenpairs(rp.A, rp.M, opt).values;
    sol.method = "lanczos";
  }
  const InertiaResult in = ldlt_inertia(rp.A, rp.M, Lambda);
  sol.certified_count = in.count_below;
  sol.count_matches = !in.near_singular && in.count_below == static_cast<int>(sol.values.size());
  if (!sol.count_matches)
    log::warn("reduced eigenvalue count ", sol.values.size(), " differs from inertia count ", in.count_below,
              in.near_singular ? " (Lambda is numerically an eigenvalue)" : "");
  return sol;
}

SpectrumComparison compare_spectra(const std::vector<double>& cand, const std::vector<double>& ref, int count) {
  SpectrumComparison sc;
  const int nref = count < 0 ? static_cast<int>(ref.size()) : std::min<int>(count, static_cast<int>(ref.size()));
  const int n = std::min<int>(nref, static_cast<int>(cand.size()));
  sc.missing = nref - n;
  for (int j = 0; j < n; ++j) {
    sc.rel.push_back((cand[j] - ref[j]) / ref[j]);
    sc.max_rel = std::max(sc.max_rel, std::abs(sc.rel.back()));
  }
  int first = 0;
  for (int j = 1; j <= n; ++j) {
    if (j < n && ref[j] - ref[j - 1] < 1e-6 * ref[j]) continue;
    if (j - first > 1) {
      double m = 0.0;
      for (int i = first; i < j; ++i) m = std::max(m, std::abs(sc.rel[i]));
      sc.clusters.emplace_back(first, j - 1);
      sc.cluster_max.push_back(m);
    }
    first = j;
  }
  return sc;
}

void write_report(const std::filesystem::path& dir, const SolveReport& r) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw Error("reduce", concat("cannot write ", (dir / name).string()));
    return os;
  };
  {
    auto os = open("report.txt");
    os << "pucpi solve report\n\n[config]\n";
    for (const auto& [k, v] : r.config) os << k << " = " << v << '\n';
    os << "\n[dimensions]\n";
    os << "full_dofs = " << r.full_dofs << '\n';
    os << "reduced_dofs = " << r.reduced_dofs << '\n';
    os << "nnz_reduced = " << r.nnz_reduced << '\n';
    os << "nnz_full_stiffness = " << r.nnz_full << '\n';
    os << "fill_in_percent = " << format_exact(100.0 * r.fill_in()) << '\n';
    os << "\n[spectrum]\n";
    os << "method = " << r.method << '\n';
    os << "eigenvalues_below_lambda = " << r.eigenvalues.size() << '\n';
    os << "inertia_count = " << r.certified_count << (r.count_matches ? " (matches)" : " (MISMATCH)") << '\n';
    if (!r.reference.empty()) {
      os << "compared_modes = " << r.comparison.rel.size() << '\n';
      os << "missing_modes = " << r.comparison.missing << '\n';
      os << "max_relative_error = " << format_exact(r.comparison.max_rel) << '\n';
      for (size_t c = 0; c < r.comparison.clusters.size(); ++c)
        os << "cluster " << r.comparison.clusters[c].first + 1 << '-' << r.comparison.clusters[c].second + 1
           << " max_relative_error = " << format_exact(r.comparison.cluster_max[c]) << '\n';
    }
    os << "extension_norm_constant = unknown\n";
  }
  {
    auto os = open("eigenvalues.csv");
    os << "index,lambda,lambda_ref,rel_error\n";
    for (size_t j = 0; j < r.eigenvalues.size(); ++j) {
      os << j + 1 << ',' << format_exact(r.eigenvalues[j]) << ',';
      if (j < r.reference.size()) os << format_exact(r.reference[j]);
      os << ',';
      if (j < r.comparison.rel.size()) os << format_exact(r.comparison.rel[j]);
      os << '\n';
    }
  }
  {
    auto os = open("subdomains.csv");
    os << "subdomain,n,K,k,sigma_tail,n_ext,n_U\n";
    for (const auto& s : r.subdomains) {
      auto get = [&](const char* key) {
        auto it = s.info.find(key);
        return it == s.info.end() ? std::string() : format_exact(it->second);
      };
      os << s.p << ',' << s.n << ',' << s.K << ',' << s.k << ',' << format_exact(s.sigma_tail) << ','
         << get("n_ext") << ',' << get("n_U") << '\n';
    }
  }
  {
    auto os = open("timings.csv");
    os << "stage,seconds\n";
    for (const auto& [k, v] : r.timings) os << k << ',' << v << '\n';
  }
}

}  // namespace pucpi
