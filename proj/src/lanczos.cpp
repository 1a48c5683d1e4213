#include "pucpi/lanczos.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pucpi/common.hpp"

namespace pucpi {

namespace {

Vec random_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = normal(rng);
  return x;
}

/// Locked (deflated) vectors and their images under the inner-product matrix.
struct Locked {
  Mat V;
  Mat BV;
  int cols() const { return static_cast<int>(V.cols()); }
  void append(const Vec& v, const Vec& bv) {
    V.conservativeResize(v.size(), V.cols() + 1);
    BV.conservativeResize(v.size(), BV.cols() + 1);
    V.col(V.cols() - 1) = v;
    BV.col(BV.cols() - 1) = bv;
  }
};

struct RitzSet {
  std::vector<double> theta;  ///< descending
  std::vector<double> resid;
  Mat X;                      ///< Ritz vectors of the leading `keep` values
  int steps = 0;
  bool exhausted = false;     ///< Krylov space became invariant
};

/// Returns -1 to continue, otherwise the number of leading Ritz pairs to materialize.
using StopRule = std::function<int(const std::vector<double>& theta,
                                   const std::vector<double>& resid, int steps, bool final)>;

/// One Lanczos run with full (two-pass) reorthogonalization against the locked vectors and the
/// current basis. `B` defines the inner product (nullptr: Euclidean).
RitzSet lanczos_run(const LinearOp& op, const SpMat* B, const Locked& locked, Vec start,
                    int max_steps, const StopRule& stop, int& applications) {
  const int n = static_cast<int>(start.size());
  auto applyB = [&](const Vec& x) -> Vec { return B ? Vec(*B * x) : x; };
  const int chunk = 32;
  Mat Q(n, std::min(max_steps, chunk)), BQ;
  if (B) BQ.resize(n, Q.cols());
  std::vector<double> alpha, beta;

  auto orthogonalize = [&](Vec& w, Vec& bw, int m, double* coef_last) {
    for (int pass = 0; pass < 2; ++pass) {
      if (locked.cols() > 0) {
        const Vec c = locked.BV.transpose() * w;
        w.noalias() -= locked.V * c;
        if (B) bw.noalias() -= locked.BV * c;
      }
      if (m > 0) {
        const Vec h = (B ? BQ.leftCols(m) : Q.leftCols(m)).transpose() * w;
        w.noalias() -= Q.leftCols(m) * h;
        if (B) bw.noalias() -= BQ.leftCols(m) * h;
        if (coef_last) *coef_last += h[m - 1];
      }
    }
    if (!B) bw = w;
  };

  RitzSet out;
  Vec w = std::move(start);
  Vec bw = applyB(w);
  orthogonalize(w, bw, 0, nullptr);
  double b0 = std::sqrt(std::max(w.dot(bw), 0.0));
  if (!(b0 > 1e-300)) {
    out.exhausted = true;
    return out;
  }
  double scale = 0.0;
  for (int j = 0; j < max_steps; ++j) {
    const double bprev = (j == 0) ? b0 : beta.back();
    if (j >= Q.cols()) {
      const int grow = std::min<int>(max_steps, static_cast<int>(Q.cols()) * 2);
      Q.conservativeResize(n, grow);
      if (B) BQ.conservativeResize(n, grow);
    }
    Q.col(j) = w / bprev;
    if (B) BQ.col(j) = bw / bprev;
    Vec y(n);
    op(Q.col(j), y);
    ++applications;
    w = std::move(y);
    bw = applyB(w);
    double a = 0.0;
    orthogonalize(w, bw, j + 1, &a);
    alpha.push_back(a);
    const double b = std::sqrt(std::max(w.dot(bw), 0.0));
    beta.push_back(b);
    scale = std::max({scale, std::abs(a), b});
    const int m = j + 1;
    const bool invariant = b <= 1e-13 * scale || m >= n - locked.cols();
    const bool final = invariant || m == max_steps;
    if (!(m % 5 == 0 || final)) continue;

    Vec diag = Eigen::Map<Vec>(alpha.data(), m);
    Vec sub = (m > 1) ? Vec(Eigen::Map<Vec>(beta.data(), m - 1)) : Vec();
    Eigen::SelfAdjointEigenSolver<Mat> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    std::vector<double> theta(m), resid(m);
    for (int i = 0; i < m; ++i) {
      const int col = m - 1 - i;  // ascending -> descending
      theta[i] = es.eigenvalues()[col];
      resid[i] = invariant ? 0.0 : std::abs(b * es.eigenvectors()(m - 1, col));
    }
    const int keep = stop(theta, resid, m, final);
    if (keep < 0 && !final) continue;
    const int k = std::clamp(keep, 0, m);
    Mat S(m, k);
    for (int i = 0; i < k; ++i) S.col(i) = es.eigenvectors().col(m - 1 - i);
    out.X = Q.leftCols(m) * S;
    out.theta = std::move(theta);
    out.resid = std::move(resid);
    out.steps = m;
    out.exhausted = invariant;
    return out;
  }
  return out;
}

int leading_converged(const std::vector<double>& theta, const std::vector<double>& resid,
                      const std::function<bool(double, double)>& ok) {
  int k = 0;
  while (k < static_cast<int>(theta.size()) && ok(theta[k], resid[k])) ++k;
  return k;
}

}  // namespace

double symmetry_defect(const LinearOp& apply, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Vec u = random_vector(rng, n), v = random_vector(rng, n);
  Vec au(n), av(n);
  apply(u, au);
  apply(v, av);
  const double denom = u.norm() * av.norm() + v.norm() * au.norm();
  if (!(denom > 0)) return 0.0;
  return std::abs(v.dot(au) - u.dot(av)) / denom;
}

EigenpairSet smallest_eigenpairs(const SpMat& A, const SpMat& M, const SmallestOptions& options) {
  const int n = static_cast<int>(A.rows());
  const bool threshold_mode = std::isfinite(options.threshold);
  if (threshold_mode == (options.count >= 0))
    throw Error("eigcore", "smallest_eigenpairs needs exactly one of count and threshold");
  EigenpairSet result;
  if (n == 0) return result;

  const double na = norm1(A), nm = norm1(M);
  const double scale = threshold_mode ? std::max(std::abs(options.threshold), 1e-300) : na / nm;
  const double pert = options.perturbation > 0 ? options.perturbation : 1e-8 * scale;

  int target = std::min(options.count, n);
  double T = options.threshold;
  if (threshold_mode) {
    InertiaResult r = ldlt_inertia(A, M, T);
    for (int tries = 0; r.near_singular && tries < 6; ++tries) {
      T += pert * (1 << tries);
      r = ldlt_inertia(A, M, T);
    }
    if (r.near_singular) throw Error("eigcore", concat("threshold ", options.threshold, " is numerically singular"));
    target = r.count_below;
  }
  if (target == 0) {
    result.vectors.resize(n, 0);
    return result;
  }

  const ShiftedFactor sf = factor_shifted(A, M, 0.0, -pert);
  const LinearOp op = [&](const Vec& x, Vec& y) { y = sf.factor.solve(Vec(M * x)); };

  std::mt19937_64 rng(options.seed);
  Locked locked;
  std::vector<double> values;
  int applications = 0;
  const int max_restarts = 20 + 2 * target;
  Vec start = Vec::Ones(n) + random_vector(rng, n);
  int need = target;
  for (int restart = 0; restart < max_restarts; ++restart) {
    const int free_dim = n - locked.cols();
    if (free_dim <= 0) break;
    const int max_steps = std::min(free_dim, 10 * need + 200);
    const double ritz_tol = 1e-2 * options.tol;
    auto conv = [&](double th, double rs) { return rs <= ritz_tol * std::abs(th); };
    const StopRule rule = [&](const std::vector<double>& th, const std::vector<double>& rs, int,
                              bool final) {
      const int k = leading_converged(th, rs, conv);
      if (final || k >= need) return k;
      return -1;
    };
    const RitzSet ritz = lanczos_run(op, &M, locked, start, max_steps, rule, applications);
    int added = 0;
    for (int i = 0; i < static_cast<int>(ritz.X.cols()); ++i) {
      Vec x = ritz.X.col(i);
      Vec mx = M * x;
      const double nrm = std::sqrt(x.dot(mx));
      x /= nrm;
      mx /= nrm;
      const double lam = x.dot(A * x);
      if (threshold_mode && lam > T) continue;
      const double res = (A * x - lam * mx).norm();
      if (res > options.tol * (na + std::abs(lam) * nm) * x.norm()) {
        log::debug("Ritz pair ", lam, " rejected by explicit residual ", res);
        continue;
      }
      locked.append(x, mx);
      values.push_back(lam);
      ++added;
    }

    if (threshold_mode) {
      if (locked.cols() >= target) break;
      need = target - locked.cols();
    } else if (locked.cols() >= target) {
      std::vector<double> sorted = values;
      std::sort(sorted.begin(), sorted.end());
      const double lk = sorted[target - 1];
      double s = lk + std::max(1e-8 * std::abs(lk), pert);
      InertiaResult r = ldlt_inertia(A, M, s);
      for (int tries = 0; r.near_singular && tries < 6; ++tries) {
        s += std::max(1e-8 * std::abs(lk), pert) * (1 << tries);
        r = ldlt_inertia(A, M, s);
      }
      const int have = static_cast<int>(std::count_if(sorted.begin(), sorted.end(),
                                                      [&](double v) { return v < s; }));
      if (r.count_below <= have) break;
      need = r.count_below - have;
    } else {
      need = target - locked.cols();
    }
    start = random_vector(rng, n);
    if (added == 0) log::debug("Lanczos restart ", restart, " locked no new pairs");
  }

  const bool complete = threshold_mode ? locked.cols() >= target : locked.cols() >= target;
  if (!complete)
    throw Error("eigcore", concat("Lanczos did not converge: ", locked.cols(), " of ", target,
                                  " eigenpairs after ", applications, " operator applications"));
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
  const int keep = threshold_mode ? static_cast<int>(values.size()) : target;
  result.values.resize(keep);
  result.vectors.resize(n, keep);
  for (int i = 0; i < keep; ++i) {
    result.values[i] = values[order[i]];
    result.vectors.col(i) = locked.V.col(order[i]);
  }
  return result;
}

DominantResult dominant_pairs_of_operator(const LinearOp& apply, int n,
                                          const DominantOptions& options) {
  const bool threshold_mode = options.threshold > 0;
  if (threshold_mode == (options.count >= 0))
    throw Error("eigcore", "dominant_pairs_of_operator needs exactly one of count and threshold");
  DominantResult result;
  result.vectors.resize(n, 0);
  if (n == 0) return result;
  const double defect = symmetry_defect(apply, n, options.seed);
  if (defect > options.symmetry_tol)
    throw Error("eigcore", concat("operator asymmetry detected (relative defect ", defect, ")"));

  const int target = threshold_mode ? -1 : std::min(options.count, n);
  std::mt19937_64 rng(options.seed);
  Locked locked;
  std::vector<double> values;
  double top = 0.0;
  double tail = 0.0;
  bool tail_found = false;
  const int max_restarts = 50 + (threshold_mode ? 0 : 2 * target);
  int restart = 0;
  for (; restart < max_restarts; ++restart) {
    const int free_dim = n - locked.cols();
    if (free_dim <= 0) break;
    if (!threshold_mode && target == 0) break;
    const int need = threshold_mode ? 0 : std::max(target - locked.cols(), 1);
    const StopRule rule = [&](const std::vector<double>& th, const std::vector<double>& rs, int steps,
                              bool final) {
      const double s = std::max(top, std::abs(th.front()));
      auto conv = [&](double, double r) { return r <= options.tol * s; };
      const int k = leading_converged(th, rs, conv);
      if (threshold_mode) {
        const int a = static_cast<int>(std::count_if(th.begin(), th.end(),
                                                     [&](double t) { return t > options.threshold; }));
        const int wanted = std::min(a + 1, static_cast<int>(th.size()));
        if (k >= wanted) return wanted;
        if (final || steps >= 10 * (a + 1) + 200) return k;
        return -1;
      }
      if (k >= need) return need;
      return final ? k : -1;
    };
    const int max_steps = threshold_mode ? free_dim : std::min(free_dim, 10 * need + 200);
    Vec start = random_vector(rng, n);
    if (restart == 0) start += Vec::Ones(n);
    const RitzSet ritz = lanczos_run(apply, nullptr, locked, start, max_steps, rule, result.applications);
    if (ritz.theta.empty()) break;
    top = std::max(top, ritz.theta.front());
    int added = 0;
    const int got = static_cast<int>(ritz.X.cols());
    for (int i = 0; i < got; ++i) {
      const double th = ritz.theta[i];
      if (threshold_mode && th <= options.threshold) {
        tail = std::max(tail, th);
        tail_found = true;
        continue;
      }
      Vec x = ritz.X.col(i);
      x.normalize();
      locked.append(x, x);
      values.push_back(th);
      ++added;
    }
    if (threshold_mode) {
      // A run that converges without producing a new eigenvalue above the threshold
      // verifies that none was missed.
      if (added == 0 && (got > 0 || ritz.exhausted)) break;
      if (ritz.exhausted && ritz.steps >= free_dim) {
        if (locked.cols() >= n) break;
      }
    } else if (locked.cols() >= target) {
      std::vector<double> sorted = values;
      std::sort(sorted.rbegin(), sorted.rend());
      if (added == 0) break;
      // Verification restart: the deflated operator must not exceed the smallest kept value.
      const double kth = sorted[target - 1];
      const RitzSet check = lanczos_run(
          apply, nullptr, locked, random_vector(rng, n), std::min(n - locked.cols(), 200),
          [&](const std::vector<double>& th, const std::vector<double>& rs, int, bool final) {
            if (rs.front() <= options.tol * std::max(top, th.front())) return 1;
            return final ? 1 : -1;
          },
          result.applications);
      if (check.theta.empty() || check.theta.front() <= kth + options.tol * top) break;
    }
  }
  result.restarts = restart;
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
  const int keep = threshold_mode ? static_cast<int>(values.size())
                                  : std::min(target, static_cast<int>(values.size()));
  if (!threshold_mode && keep < target)
    throw Error("eigcore", concat("dominant Lanczos found ", keep, " of ", target, " pairs"));
  result.values.resize(keep);
  result.vectors.resize(n, keep);
  for (int i = 0; i < keep; ++i) {
    result.values[i] = values[order[i]];
    result.vectors.col(i) = locked.V.col(order[i]);
  }
  result.tail = tail_found ? tail : 0.0;
  return result;
}

}  // namespace pucpi
