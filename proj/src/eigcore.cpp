#include "pucpi/eigcore.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "pucpi/common.hpp"

namespace pucpi {

void SymmetricFactor::compute(const SpMat& S) {
  S_ = S;
  inertia_ = {};
  ldlt_ = std::make_unique<Ldlt>();
  ldlt_->compute(S_);
  ok_ = ldlt_->info() == Eigen::Success;
  if (!ok_) {
    inertia_.zero = 1;
    return;
  }
  const Vec& D = ldlt_->vectorD();
  const double big = D.cwiseAbs().maxCoeff();
  const double thr = 1e-12 * big;
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    if (std::abs(D[i]) <= thr || !std::isfinite(D[i]))
      ++inertia_.zero;
    else if (D[i] < 0)
      ++inertia_.negative;
    else
      ++inertia_.positive;
  }
}

Vec SymmetricFactor::solve(const Vec& b) const {
  if (!ok_) throw Error("eigcore", "solve with a failed factorization");
  Vec x = ldlt_->solve(b);
  const Vec r = b - S_ * x;
  x += ldlt_->solve(r);
  return x;
}

Mat SymmetricFactor::solve(const Mat& B) const {
  if (!ok_) throw Error("eigcore", "solve with a failed factorization");
  Mat X = ldlt_->solve(B);
  const Mat R = B - S_ * X;
  X += ldlt_->solve(R);
  return X;
}

ShiftedFactor factor_shifted(const SpMat& A, const SpMat& M, double t, double perturbation,
                             int max_tries) {
  ShiftedFactor sf;
  sf.requested_shift = t;
  sf.shift = t;
  for (int attempt = 0;; ++attempt) {
    sf.factor.compute(SpMat(A - sf.shift * M));
    if (!sf.factor.near_singular()) return sf;
    if (attempt + 1 >= max_tries)
      throw Error("eigcore", concat("shift ", t, " stays numerically singular after ", attempt + 1,
                                    " perturbations"));
    ++sf.perturbations;
    const double step = perturbation * (1 << (attempt / 2));
    sf.shift = t + ((attempt % 2 == 0) ? step : -step);
    log::debug("near-singular shift ", t, ", retrying at ", sf.shift);
  }
}

InertiaResult ldlt_inertia(const SpMat& A, const SpMat& M, double t) {
  SymmetricFactor f(SpMat(A - t * M));
  InertiaResult r;
  r.inertia = f.inertia();
  r.count_below = r.inertia.negative;
  r.near_singular = f.near_singular();
  return r;
}

void CholeskyFactor::compute(const SpMat& K) {
  llt_ = std::make_unique<Llt>();
  llt_->compute(K);
  if (llt_->info() != Eigen::Success) throw Error("eigcore", "Cholesky factorization failed (matrix not SPD)");
  L_ = llt_->matrixL();
}

Vec CholeskyFactor::apply_F(const Vec& x) const { return llt_->permutationPinv() * Vec(L_ * x); }

Vec CholeskyFactor::apply_Ft(const Vec& x) const {
  return L_.transpose() * Vec(llt_->permutationP() * x);
}

Vec CholeskyFactor::solve_Ft(const Vec& c) const {
  return llt_->permutationPinv() * Vec(L_.transpose().triangularView<Eigen::Upper>().solve(c));
}

Mat CholeskyFactor::solve_Ft(const Mat& C) const {
  return llt_->permutationPinv() * Mat(L_.transpose().triangularView<Eigen::Upper>().solve(C));
}

EigenpairSet dense_pencil_solve(const Mat& A, const Mat& M) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(A, M, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw Error("eigcore", "dense generalized eigensolver failed");
  EigenpairSet out;
  out.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  out.vectors = es.eigenvectors();
  return out;
}

EigenpairSet dense_reference_solve(const SpMat& A, const SpMat& M, int k, int cap) {
  if (A.rows() > cap)
    throw Error("eigcore", concat("dense solve of order ", A.rows(), " exceeds cap ", cap));
  EigenpairSet all = dense_pencil_solve(Mat(A), Mat(M));
  if (k >= 0 && k < all.size()) {
    all.values.resize(k);
    all.vectors = all.vectors.leftCols(k).eval();
  }
  return all;
}

bool residuals_ok(const SpMat& A, const SpMat& M, const EigenpairSet& pairs, double tol,
                  double* worst) {
  const double na = norm1(A), nm = norm1(M);
  double w = 0.0;
  for (int j = 0; j < pairs.size(); ++j) {
    const Vec v = pairs.vectors.col(j);
    const double lam = pairs.values[j];
    const double r = (A * v - lam * (M * v)).norm();
    const double scale = (na + std::abs(lam) * nm) * v.norm();
    w = std::max(w, scale > 0 ? r / scale : r);
  }
  if (worst) *worst = w;
  return w <= tol;
}

}  // namespace pucpi
