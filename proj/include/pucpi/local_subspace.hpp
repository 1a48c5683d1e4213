#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pucpi/cover.hpp"
#include "pucpi/eigcore.hpp"
#include "pucpi/lanczos.hpp"

namespace pucpi {

struct SpectralConfig {
  double Lambda = 0.0;
  double eta = 2.5;
  int N = 5;
  double tol = 1e-2;
  double radius_factor = 0.2;

  double Lambda_tilde() const { return eta * Lambda; }
  std::vector<double> nodes() const;
  /// Throws Error("config") on invalid values; warns when eta <= 5/4.
  void validate() const;
};

/// Everything one worker needs for one subdomain, expressed on the submesh of the extended
/// subdomain. All index lists are local to that submesh and ascending.
struct LocalTask {
  int subdomain = 0;
  SpectralConfig config;
  std::uint64_t seed = 1;
  MeshTopology mesh;                     ///< boundary flags mark the boundary of the extension
  std::vector<int> vertex_map;           ///< local vertex -> global vertex
  std::vector<int> cell_map;             ///< local cell -> global cell
  std::vector<int> subdomain_cells;      ///< cells of U
  std::vector<int> owned_vertices;       ///< vertices of the subdomain's vertex set
  std::vector<int> dirichlet_vertices;   ///< vertices on the boundary of the domain
  std::vector<int> gamma_vertices;       ///< owned non-Dirichlet vertices of overlap cells
  std::vector<int> gamma_cells;          ///< overlap cells that touch an owned vertex
};

LocalTask make_local_task(const MeshTopology& mesh, const CoverPlan& plan, int p,
                          const SpectralConfig& config, std::uint64_t seed);

/// Per-subdomain result shipped to the master: diagonal Ritz values and the values of the local
/// basis at the owned vertices of overlap cells.
struct LocalBasisResult {
  int subdomain = 0;
  int K_modes = 0;            ///< K(Lambda_tilde)
  int k_complement = 0;       ///< retained singular vectors
  int n = 0;                  ///< basis dimension after rank filtering
  double sigma_tail = 0.0;    ///< first discarded singular value
  std::vector<double> sigma;  ///< retained singular values, descending
  std::vector<double> d;      ///< ascending local Ritz values
  std::vector<int> gamma_vertices;         ///< global vertex ids
  Mat gamma_values;                        ///< |gamma_vertices| x n
  std::vector<int> gamma_cells;            ///< global cell ids
  std::vector<double> gamma_cell_volumes;
  std::map<std::string, double> info;      ///< dimensions and counters (deterministic)
  std::map<std::string, double> timings;   ///< seconds per stage, kept out of result files
  Mat basis;                               ///< owned rows of the basis; only with keep_basis
  std::vector<int> basis_vertices;         ///< global vertex of each row of `basis`
};

struct Truncation {
  int k = 0;
  std::vector<double> sigma;  ///< sigma_1..sigma_k
  double tail = 0.0;          ///< sigma_{k+1} (0 when the spectrum is exhausted)
  Mat C;                      ///< leading eigenvectors of C C^T (n_U x k)
};

struct InterpProbe {
  double max_e0 = 0.0, max_e1 = 0.0;
  double max_ratio0 = 0.0, max_ratio1 = 0.0;  ///< measured / bound
  double max_relative = 0.0;                  ///< e1 / ||Z(t) w||_{H1 seminorm}
  double max_at_nodes = 0.0;                  ///< largest relative error at t = xi_i
  int probes = 0;
};

/// The per-subdomain operators: local modes, condensed pole operator, trace-norm solve,
/// linearized operator and the stitched Gram matrix. Construction runs the factorizations.
class LocalSubspace {
 public:
  explicit LocalSubspace(const LocalTask& task);

  const LocalTask& task() const { return task_; }
  const LocalDofMap& ext_dofs() const { return ext_; }
  const LocalDofMap& sub_dofs() const { return sub_; }
  int n_B() const { return ext_.n_B; }
  int n_I() const { return ext_.n_I; }
  int n_U() const { return sub_.size(); }
  const SpMat& A_ext() const { return A_; }
  const SpMat& M_ext() const { return M_; }
  const SpMat& K() const { return K_; }
  const SpMat& K_R() const { return KR_; }
  const SpMat& A_II() const { return AII_; }
  const SpMat& M_II() const { return MII_; }
  const SpMat& A_IB() const { return AIB_; }
  const SpMat& M_IB() const { return MIB_; }
  const EigenpairSet& modes() const { return modes_; }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<int>& fu_index() const { return fu_index_; }
  const std::vector<char>& owned() const { return owned_; }
  const CholeskyFactor& KR_factor() const { return kr_factor_; }

  Vec apply_P(const Vec& xI) const;   ///< x - V V^T M_II x
  Vec apply_Pt(const Vec& xI) const;  ///< x - M_II V V^T x
  /// Z_h(t) w_B; factorizes A_II - t M_II unless t is one of the nodes.
  Vec apply_Zh(double t, const Vec& wB) const;
  Mat apply_Zh(double t, const Mat& WB) const;
  Vec apply_Zh_node(int i, const Vec& wB) const;
  Vec apply_ZhT_node(int i, const Vec& xI) const;
  Vec apply_Sinv(const Vec& xB) const;
  Vec restrict_to_U(const Vec& xI) const;  ///< F_U
  Vec extend_from_U(const Vec& xU) const;  ///< F_U^T
  /// F^T (sum_i F_U Z(xi_i) S^{-1} Z(xi_i)^T F_U^T) F x with K_R = F F^T.
  Vec apply_cct(const Vec& x) const;
  LinearOp cct_operator() const;

  Truncation truncate(double tol) const;
  /// Leading `count` singular values of the linearized operator (descending).
  std::vector<double> singular_values(int count) const;

  /// `keep_basis` also returns the owned rows of the basis (never serialized).
  LocalBasisResult build(const Truncation& trunc, bool keep_basis = false) const;
  LocalBasisResult run() const { return build(truncate(task_.config.tol)); }

  /// Interpolation error of sum_i l_i(t) Z(xi_i) w against Z(t) w, in the M_II and A_II norms.
  InterpProbe interp_error_probe(const std::vector<double>& t_grid, const Mat& WB) const;

  std::map<std::string, double> timings() const { return timings_; }

 private:
  LocalTask task_;
  LocalDofMap ext_, sub_;
  SpMat A_, M_, K_, KR_, AII_, MII_, AIB_, MIB_, KBB_;
  SpMat AU_, MU_;
  EigenpairSet modes_;
  Mat MV_;
  std::vector<double> nodes_;
  std::vector<ShiftedFactor> node_factors_;
  CholeskyFactor k_factor_, kr_factor_;
  std::vector<int> fu_index_;
  std::vector<char> owned_;
  std::map<std::string, double> timings_;
};

/// Orthonormalizes the columns of Q in the M0 inner product after dropping directions whose
/// Gram eigenvalue is below `drop` times the largest, then diagonalizes A0 on the span.
/// Returns Q-tilde with Q-tilde^T M0 Q-tilde = I and Q-tilde^T A0 Q-tilde = diag(d).
Mat build_local_basis(const Mat& Q, const SpMat& A0, const SpMat& M0, std::vector<double>& d,
                      double drop = 1e-12);

LocalBasisResult compute_local_basis(const LocalTask& task);

}  // namespace pucpi
