#pragma once

#include <vector>

namespace pucpi {

/// First-kind Chebyshev nodes mapped to (0, Lambda), ascending:
/// xi_i = (Lambda/2)(1 + cos((2(N-i)+1) pi / (2N))), i = 1..N.
std::vector<double> chebyshev_nodes(int N, double Lambda);

/// Lagrange cardinal polynomials of `nodes` evaluated at t.
std::vector<double> lagrange_eval(const std::vector<double>& nodes, double t);

/// max over [0, Lambda] of sum_i |l_i(t)|, sampled on `samples` uniform points plus the nodes.
double lebesgue_constant(const std::vector<double>& nodes, double Lambda, int samples = 100000);

/// e(eta, N) = 12 eta [4(eta - 1)]^(-N-1) (2 + eta Lambda + 1/(eta Lambda))^(1/2).
double interp_bound_e(double eta, int N, double Lambda);

/// Bound on the interpolation error in the L2 (l = 0) or H1-seminorm (l = 1) for a trace whose
/// zero extension has H1 norm `ext_norm`:
/// 12 [4(eta - 1)]^(-N-1) (eta^(l+1) Lambda^(l-1) + eta^(l+2) Lambda^l)^(1/2) ext_norm.
double interp_error_bound(int l, double eta, int N, double Lambda, double ext_norm);

}  // namespace pucpi
