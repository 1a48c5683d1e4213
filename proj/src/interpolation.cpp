#include "pucpi/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pucpi/common.hpp"

namespace pucpi {

std::vector<double> chebyshev_nodes(int N, double Lambda) {
  if (N < 1) throw Error("local", concat("need at least one interpolation point, got ", N));
  if (!(Lambda > 0)) throw Error("local", concat("Lambda must be positive, got ", Lambda));
  std::vector<double> xi(N);
  for (int i = 1; i <= N; ++i)
    xi[i - 1] = 0.5 * Lambda * (1.0 + std::cos((2.0 * (N - i) + 1.0) * std::numbers::pi / (2.0 * N)));
  return xi;
}

std::vector<double> lagrange_eval(const std::vector<double>& nodes, double t) {
  const size_t N = nodes.size();
  for (size_t i = 0; i < N; ++i)
    for (size_t j = 0; j < i; ++j)
      if (nodes[i] == nodes[j]) throw Error("local", "duplicate interpolation nodes");
  std::vector<double> l(N, 1.0);
  for (size_t i = 0; i < N; ++i)
    for (size_t j = 0; j < N; ++j)
      if (j != i) l[i] *= (t - nodes[j]) / (nodes[i] - nodes[j]);
  return l;
}

double lebesgue_constant(const std::vector<double>& nodes, double Lambda, int samples) {
  auto value = [&](double t) {
    double s = 0.0;
    for (double li : lagrange_eval(nodes, t)) s += std::abs(li);
    return s;
  };
  double best = 0.0;
  for (int k = 0; k < samples; ++k)
    best = std::max(best, value(Lambda * k / std::max(samples - 1, 1)));
  for (double xi : nodes) best = std::max(best, value(xi));
  return best;
}

double interp_bound_e(double eta, int N, double Lambda) {
  if (!(eta > 1.0)) throw Error("local", concat("oversampling parameter must satisfy eta > 1, got ", eta));
  if (N < 1) throw Error("local", concat("need at least one interpolation point, got ", N));
  return 12.0 * eta * std::pow(4.0 * (eta - 1.0), -N - 1.0) *
         std::sqrt(2.0 + eta * Lambda + 1.0 / (eta * Lambda));
}

double interp_error_bound(int l, double eta, int N, double Lambda, double ext_norm) {
  if (!(eta > 1.0)) throw Error("local", concat("oversampling parameter must satisfy eta > 1, got ", eta));
  return 12.0 * std::pow(4.0 * (eta - 1.0), -N - 1.0) *
         std::sqrt(std::pow(eta, l + 1) * std::pow(Lambda, l - 1) + std::pow(eta, l + 2) * std::pow(Lambda, l)) *
         ext_norm;
}

}  // namespace pucpi
