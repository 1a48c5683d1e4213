#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pucpi/local_subspace.hpp"

namespace pucpi {

/// Reduced pencil on the stitched basis. Block p occupies rows offset[p] .. offset[p+1]-1 in
/// local-index order.
struct ReducedProblem {
  int size = 0;
  std::vector<int> offset;
  SpMat A, M;
  std::vector<std::pair<int, int>> coupled_pairs;  ///< (q, p) with q < p and shared overlap cells

  int row(int p, int l) const { return offset[p] + l; }
};

/// Diagonal blocks (diag d, I); off-diagonal blocks integrated exactly over the shared overlap
/// cells from the stored vertex values. `results[p]` must describe subdomain p.
ReducedProblem assemble_reduced(const MeshTopology& mesh, const std::vector<LocalBasisResult>& results);

struct ReducedSolution {
  std::vector<double> values;  ///< ascending, all <= Lambda
  int certified_count = -1;    ///< inertia count of A - Lambda M
  bool count_matches = false;
  std::string method;
};

/// All eigenvalues of the reduced pencil up to Lambda. Dense when the order is at most
/// `dense_cap`, shift-invert Lanczos otherwise. Throws Error("reduce") when M is not SPD.
ReducedSolution solve_reduced(const ReducedProblem& rp, double Lambda, int dense_cap = 3000,
                              std::uint64_t seed = 1);

struct SpectrumComparison {
  std::vector<double> rel;            ///< (candidate_j - reference_j) / reference_j
  double max_rel = 0.0;
  int missing = 0;                    ///< reference modes without a candidate
  std::vector<std::pair<int, int>> clusters;  ///< [first, last] reference indices, gap < 1e-6 lambda
  std::vector<double> cluster_max;
};

/// Index-by-index pairing of ascending sequences over the first `count` reference values
/// (all when count < 0).
SpectrumComparison compare_spectra(const std::vector<double>& candidate,
                                   const std::vector<double>& reference, int count = -1);

struct SubdomainSummary {
  int p = 0, n = 0, K = 0, k = 0;
  double sigma_tail = 0.0;
  std::map<std::string, double> info;
};

struct SolveReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<double> eigenvalues;
  std::vector<double> reference;  ///< empty when no reference was computed
  SpectrumComparison comparison;
  int compare_count = -1;
  int full_dofs = 0;
  int reduced_dofs = 0;
  long nnz_reduced = 0;
  long nnz_full = 0;
  int certified_count = -1;
  bool count_matches = false;
  std::string method;
  std::vector<SubdomainSummary> subdomains;
  std::vector<std::pair<std::string, double>> timings;

  double fill_in() const { return nnz_full > 0 ? static_cast<double>(nnz_reduced) / nnz_full : 0.0; }
};

/// report.txt, eigenvalues.csv, subdomains.csv and timings.csv. Only timings.csv holds
/// wall-clock data.
void write_report(const std::filesystem::path& dir, const SolveReport& report);

}  // namespace pucpi
