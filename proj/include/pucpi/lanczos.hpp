#pragma once

#include <cstdint>
#include <functional>
#include <limits>

#include "pucpi/eigcore.hpp"

namespace pucpi {

/// y = Op x. Must realize a symmetric operator in the inner product used by the caller.
using LinearOp = std::function<void(const Vec& x, Vec& y)>;

struct SmallestOptions {
  int count = -1;                                            ///< count mode when >= 0
  double threshold = std::numeric_limits<double>::quiet_NaN();  ///< threshold mode when finite
  double tol = 1e-10;                                        ///< explicit residual tolerance
  double perturbation = 0.0;  ///< shift perturbation for near-singular shifts (0: automatic)
  std::uint64_t seed = 0x5eed;
};

/// Smallest eigenpairs of the pencil (A, M) by shift-invert Lanczos at shift 0 with full
/// M-reorthogonalization, locking and restarts. Threshold mode returns every eigenvalue <= the
/// threshold, certified by inertia; count mode returns the `count` smallest, certified by
/// inertia just above the last one.
EigenpairSet smallest_eigenpairs(const SpMat& A, const SpMat& M, const SmallestOptions& options);

struct DominantOptions {
  int count = -1;         ///< count mode when >= 0
  double threshold = -1;  ///< threshold mode when > 0: all eigenvalues > threshold plus the next
  double tol = 1e-10;     ///< Lanczos residual tolerance relative to the largest eigenvalue
  std::uint64_t seed = 0x5eed;
  double symmetry_tol = 1e-8;
};

/// Descending eigenvalues of a symmetric PSD operator in the Euclidean inner product.
struct DominantResult {
  std::vector<double> values;
  Mat vectors;
  /// Threshold mode: first eigenvalue at or below the threshold (0 when the space is exhausted).
  double tail = 0.0;
  int restarts = 0;
  int applications = 0;
};

DominantResult dominant_pairs_of_operator(const LinearOp& apply, int n,
                                          const DominantOptions& options);

/// |v^T (A u) - u^T (A v)| relative to ||u|| ||A v|| + ||v|| ||A u||, on seeded random vectors.
double symmetry_defect(const LinearOp& apply, int n, std::uint64_t seed);

}  // namespace pucpi
