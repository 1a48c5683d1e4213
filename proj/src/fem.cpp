#include "pucpi/fem.hpp"

#include <cmath>
#include <ostream>

#include "pucpi/common.hpp"

namespace pucpi {

ElementGeometry element_geometry(const MeshTopology& mesh, int c) {
  const int d = mesh.dim;
  const auto cell = mesh.cell(c);
  Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
  const Point& x0 = mesh.vertices[cell[0]];
  for (int k = 1; k <= d; ++k)
    for (int i = 0; i < d; ++i) J(i, k - 1) = mesh.vertices[cell[k]][i] - x0[i];
  ElementGeometry g;
  const double det = J.topLeftCorner(d, d).determinant();
  g.volume = std::abs(det) / (d == 2 ? 2.0 : 6.0);
  if (!(g.volume > 0.0)) throw Error("fem", concat("degenerate cell ", c, " (zero volume)"));
  Eigen::Matrix3d Jinv = Eigen::Matrix3d::Zero();
  if (d == 2)
    Jinv.topLeftCorner<2, 2>() = J.topLeftCorner<2, 2>().inverse();
  else
    Jinv = J.inverse();
  for (int k = 1; k <= d; ++k)
    for (int i = 0; i < 3; ++i) g.grad[k][i] = Jinv(k - 1, i);
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int k = 1; k <= d; ++k) s += g.grad[k][i];
    g.grad[0][i] = -s;
  }
  return g;
}

void element_matrices(const ElementGeometry& g, int dim, double K[4][4], double Mm[4][4]) {
  const double cm = g.volume / ((dim + 1) * (dim + 2));
  for (int i = 0; i <= dim; ++i)
    for (int j = 0; j <= dim; ++j) {
      K[i][j] = g.volume * (g.grad[i][0] * g.grad[j][0] + g.grad[i][1] * g.grad[j][1] +
                            g.grad[i][2] * g.grad[j][2]);
      Mm[i][j] = cm * (i == j ? 2.0 : 1.0);
    }
}

StiffnessMass assemble(const MeshTopology& mesh, std::span<const int> cells,
                       std::span<const int> dof_of_vertex, int n) {
  std::vector<Eigen::Triplet<double>> ta, tm;
  const size_t per = static_cast<size_t>(mesh.dim + 1) * (mesh.dim + 1);
  ta.reserve(cells.size() * per);
  tm.reserve(cells.size() * per);
  double K[4][4], Mm[4][4];
  for (int c : cells) {
    element_matrices(element_geometry(mesh, c), mesh.dim, K, Mm);
    const auto cell = mesh.cell(c);
    for (int i = 0; i <= mesh.dim; ++i) {
      const int di = dof_of_vertex[cell[i]];
      if (di < 0) continue;
      for (int j = 0; j <= mesh.dim; ++j) {
        const int dj = dof_of_vertex[cell[j]];
        if (dj < 0) continue;
        ta.emplace_back(di, dj, K[i][j]);
        tm.emplace_back(di, dj, Mm[i][j]);
      }
    }
  }
  StiffnessMass out;
  out.A.resize(n, n);
  out.M.resize(n, n);
  out.A.setFromTriplets(ta.begin(), ta.end());
  out.M.setFromTriplets(tm.begin(), tm.end());
  return out;
}

StiffnessMass assemble_local(const MeshTopology& mesh, std::span<const int> cells,
                             const LocalDofMap& map) {
  const auto idx = map.index_of_vertex(mesh.num_vertices());
  return assemble(mesh, cells, idx, map.size());
}

LocalSystem assemble_stiffness_mass(const MeshTopology& mesh, std::span<const int> cells,
                                    const std::vector<char>& dirichlet) {
  LocalSystem sys;
  sys.dofs = build_local_dofs(mesh, cells, dirichlet);
  auto am = assemble_local(mesh, cells, sys.dofs);
  sys.A = std::move(am.A);
  sys.M = std::move(am.M);
  return sys;
}

SpMat assemble_K(const MeshTopology& mesh, std::span<const int> cells, const LocalDofMap& map) {
  const auto am = assemble_local(mesh, cells, map);
  return SpMat(am.A + am.M);
}

SpMat assemble_KR(const MeshTopology& mesh, std::span<const int> cells, const LocalDofMap& map,
                  const std::vector<char>& owned) {
  const auto am = assemble_local(mesh, cells, map);
  SpMat A = am.A;
  A.prune([&](int i, int j, double) { return owned[i] && owned[j]; });
  return SpMat(A + am.M);
}

std::vector<char> owned_mask(const LocalDofMap& map, std::span<const int> owner, int p) {
  std::vector<char> owned(map.size(), 0);
  for (int i = 0; i < map.size(); ++i) owned[i] = owner[map.vertices[i]] == p;
  return owned;
}

SpMat extension_matrix(const LocalDofMap& map) {
  SpMat E(map.size(), map.n_B);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < map.n_B; ++i) t.emplace_back(i, i, 1.0);
  E.setFromTriplets(t.begin(), t.end());
  return E;
}

SpMat stitching_matrix(const LocalDofMap& map, const std::vector<char>& owned,
                       const GlobalDofs& global) {
  SpMat R(global.size(), map.size());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < map.size(); ++i)
    if (owned[i]) {
      const int g = global.dof_of_vertex[map.vertices[i]];
      if (g < 0) throw Error("fem", concat("owned vertex ", map.vertices[i], " has no global DOF"));
      t.emplace_back(g, i, 1.0);
    }
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

SpMat restriction_matrix(const LocalDofMap& map, const GlobalDofs& global) {
  SpMat P(map.size(), global.size());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < map.size(); ++i) {
    const int g = global.dof_of_vertex[map.vertices[i]];
    if (g >= 0) t.emplace_back(i, g, 1.0);
  }
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

SpMat block(const SpMat& X, int row0, int rows, int col0, int cols) {
  std::vector<Eigen::Triplet<double>> t;
  for (int j = col0; j < col0 + cols; ++j)
    for (SpMat::InnerIterator it(X, j); it; ++it)
      if (it.row() >= row0 && it.row() < row0 + rows) t.emplace_back(it.row() - row0, j - col0, it.value());
  SpMat B(rows, cols);
  B.setFromTriplets(t.begin(), t.end());
  return B;
}

double norm1(const SpMat& X) {
  double best = 0.0;
  for (int j = 0; j < X.outerSize(); ++j) {
    double s = 0.0;
    for (SpMat::InnerIterator it(X, j); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

void dump_lower(std::ostream& os, const SpMat& X) {
  for (int j = 0; j < X.outerSize(); ++j)
    for (SpMat::InnerIterator it(X, j); it; ++it)
      if (it.row() >= j) os << it.row() << ' ' << j << ' ' << format_exact(it.value()) << '\n';
}

}  // namespace pucpi
