#pragma once

#include <Eigen/SparseCholesky>
#include <memory>
#include <vector>

#include "pucpi/fem.hpp"

namespace pucpi {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

/// Sparse LDL^T with an approximate-minimum-degree ordering. Pivots with
/// |D_i| <= 1e-12 max|D| count as zero in the inertia.
class SymmetricFactor {
 public:
  SymmetricFactor() = default;
  explicit SymmetricFactor(const SpMat& S) { compute(S); }

  void compute(const SpMat& S);
  bool ok() const { return ok_; }
  const Inertia& inertia() const { return inertia_; }
  bool near_singular() const { return !ok_ || inertia_.zero > 0; }
  int size() const { return static_cast<int>(S_.rows()); }

  /// Solve with one step of iterative refinement against the factored matrix.
  Vec solve(const Vec& b) const;
  Mat solve(const Mat& B) const;

 private:
  using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Ldlt> ldlt_;
  SpMat S_;
  Inertia inertia_;
  bool ok_ = false;
};

/// Factorization of A - t M. When the shift is numerically in the spectrum the shift is moved
/// by `perturbation` (alternating sides, growing) until the factorization is regular.
struct ShiftedFactor {
  double requested_shift = 0.0;
  double shift = 0.0;
  int perturbations = 0;
  SymmetricFactor factor;
};

ShiftedFactor factor_shifted(const SpMat& A, const SpMat& M, double t, double perturbation,
                             int max_tries = 6);

struct InertiaResult {
  Inertia inertia;
  int count_below = 0;  ///< number of pencil eigenvalues below t
  bool near_singular = false;
};

/// Sylvester inertia of A - t M. Reports near_singular instead of guessing when t is
/// numerically an eigenvalue.
InertiaResult ldlt_inertia(const SpMat& A, const SpMat& M, double t);

/// Sparse Cholesky P K P^T = L L^T of an SPD matrix, with the factor F = P^T L (K = F F^T).
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(const SpMat& K) { compute(K); }
  void compute(const SpMat& K);

  int size() const { return static_cast<int>(L_.rows()); }
  Vec solve(const Vec& b) const { return llt_->solve(b); }
  Mat solve(const Mat& B) const { return llt_->solve(B); }
  Vec apply_F(const Vec& x) const;          ///< F x
  Vec apply_Ft(const Vec& x) const;         ///< F^T x
  Vec solve_Ft(const Vec& c) const;         ///< F^{-T} c
  Mat solve_Ft(const Mat& C) const;

 private:
  using Llt = Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Llt> llt_;
  SpMat L_;
};

/// Ascending eigenvalues with M-orthonormal eigenvector columns.
struct EigenpairSet {
  std::vector<double> values;
  Mat vectors;

  int size() const { return static_cast<int>(values.size()); }
};

/// Dense generalized symmetric solve; `k` < 0 keeps all pairs. Refuses orders above `cap`.
EigenpairSet dense_reference_solve(const SpMat& A, const SpMat& M, int k, int cap = 3000);
EigenpairSet dense_pencil_solve(const Mat& A, const Mat& M);

/// ||A v - lambda M v|| <= tol (||A||_1 + |lambda| ||M||_1) ||v|| for every pair.
bool residuals_ok(const SpMat& A, const SpMat& M, const EigenpairSet& pairs, double tol,
                  double* worst = nullptr);

}  // namespace pucpi
