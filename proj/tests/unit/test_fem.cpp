#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "oracles.hpp"
#include "pucpi/cover.hpp"
#include "pucpi/fem.hpp"

using namespace pucpi;

namespace {

MeshTopology single_cell(int dim) {
  MeshTopology m;
  m.dim = dim;
  if (dim == 2) {
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.cells = {{0, 1, 2, -1}};
  } else {
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    m.cells = {{0, 1, 2, 3}};
  }
  refresh_derived(m);
  return m;
}

std::vector<int> all_cells(const MeshTopology& m) {
  std::vector<int> c(m.num_cells());
  for (int i = 0; i < m.num_cells(); ++i) c[i] = i;
  return c;
}

std::vector<int> identity_dofs(const MeshTopology& m) {
  std::vector<int> d(m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i) d[i] = i;
  return d;
}

}  // namespace

TEST(Element, ReferenceTriangle) {
  const MeshTopology m = single_cell(2);
  const ElementGeometry g = element_geometry(m, 0);
  EXPECT_DOUBLE_EQ(g.volume, 0.5);
  double K[4][4], Mm[4][4];
  element_matrices(g, 2, K, Mm);
  const double Kref[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(K[i][j], Kref[i][j], 1e-15);
      EXPECT_NEAR(Mm[i][j], (i == j ? 2.0 : 1.0) / 24.0, 1e-15);
    }
}

TEST(Element, ReferenceTetrahedron) {
  const MeshTopology m = single_cell(3);
  const ElementGeometry g = element_geometry(m, 0);
  EXPECT_NEAR(g.volume, 1.0 / 6.0, 1e-15);
  double K[4][4], Mm[4][4];
  element_matrices(g, 3, K, Mm);
  // Hat functions 1 - x - y - z, x, y, z.
  const double grads[4][3] = {{-1, -1, -1}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += grads[i][k] * grads[j][k];
      EXPECT_NEAR(K[i][j], dot / 6.0, 1e-15);
      EXPECT_NEAR(Mm[i][j], (i == j ? 2.0 : 1.0) / 120.0, 1e-15);
    }
}

TEST(Element, MassMatchesQuadratureOnMappedCell) {
  // Quadratic integrands are exact with the 4-point degree-2 rule on a tetrahedron.
  const MeshTopology m = map_domain(build_structured_mesh(3, 2), "paper-cube");
  const ElementGeometry g = element_geometry(m, 17);
  double K[4][4], Mm[4][4];
  element_matrices(g, 3, K, Mm);
  const double a = 0.5854101966249685, b = 0.1381966011250105;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double q = 0;
      for (int p = 0; p < 4; ++p) {
        const double li = i == p ? a : b, lj = j == p ? a : b;
        q += li * lj * g.volume / 4.0;
      }
      EXPECT_NEAR(Mm[i][j], q, 1e-14);
    }
}

TEST(Assembly, RowSumsAndTotalMass) {
  for (int dim : {2, 3}) {
    const MeshTopology m = map_domain(build_structured_mesh(dim, 4), dim == 3 ? "paper-cube" : "identity");
    const auto cells = all_cells(m);
    const StiffnessMass sm = assemble(m, cells, identity_dofs(m), m.num_vertices());
    const Vec ones = Vec::Ones(m.num_vertices());
    EXPECT_LT((sm.A * ones).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(ones.dot(sm.M * ones), mesh_volume(m), 1e-12);
    // Exact reproduction of the Dirichlet energy of a linear function.
    Vec x(m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v) x[v] = 2.0 * m.vertices[v][0] - m.vertices[v][1];
    EXPECT_NEAR(x.dot(sm.A * x), 5.0 * mesh_volume(m), 1e-11);
  }
}

TEST(Assembly, ExactlySymmetric) {
  const MeshTopology m = map_domain(build_structured_mesh(3, 3), "paper-cube");
  const auto cells = all_cells(m);
  const StiffnessMass sm = assemble(m, cells, identity_dofs(m), m.num_vertices());
  const Mat A = oracle::dense(sm.A), M = oracle::dense(sm.M);
  EXPECT_EQ((A - A.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((M - M.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assembly, DirichletSystemIsPositiveDefinite) {
  const MeshTopology m = build_structured_mesh(2, 6);
  const LocalSystem ls = assemble_stiffness_mass(m, all_cells(m), m.on_boundary);
  EXPECT_EQ(ls.dofs.size(), 25);
  Eigen::SelfAdjointEigenSolver<Mat> ea(oracle::dense(ls.A)), em(oracle::dense(ls.M));
  EXPECT_GT(ea.eigenvalues().minCoeff(), 0.0);
  EXPECT_GT(em.eigenvalues().minCoeff(), 0.0);
  // Smallest discrete eigenvalue approaches 2 pi^2 from above.
  const Vec ev = oracle::dense_eig(oracle::dense(ls.A), oracle::dense(ls.M)).values;
  EXPECT_GT(ev[0], 2 * M_PI * M_PI);
  EXPECT_LT(ev[0], 1.2 * 2 * M_PI * M_PI);
}

TEST(Stitching, PartitionOfUnity) {
  // Summing the stitched local restrictions reproduces any global vector.
  const MeshTopology m = build_structured_mesh(2, 12);
  CoverOptions o;
  o.M = 4;
  const CoverPlan plan = build_cover(m, o);
  const GlobalDofs g = build_global_dofs(m);
  Vec x = Vec::LinSpaced(g.size(), -1.0, 2.0);
  Vec sum = Vec::Zero(g.size());
  for (int p = 0; p < plan.M; ++p) {
    const LocalDofMap& map = plan.subdomain_dofs[p];
    const auto owned = owned_mask(map, plan.owner, p);
    sum += stitching_matrix(map, owned, g) * (restriction_matrix(map, g) * x);
  }
  EXPECT_LT((sum - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stitching, KRIsPositiveDefiniteAndOwnedStiffness) {
  const MeshTopology m = build_structured_mesh(2, 10);
  CoverOptions o;
  o.M = 3;
  const CoverPlan plan = build_cover(m, o);
  for (int p = 0; p < plan.M; ++p) {
    const LocalDofMap& map = plan.subdomain_dofs[p];
    const auto owned = owned_mask(map, plan.owner, p);
    const Mat KR = oracle::dense(assemble_KR(m, plan.subdomain_cells[p], map, owned));
    EXPECT_EQ((KR - KR.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(KR);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    const StiffnessMass sm = assemble_local(m, plan.subdomain_cells[p], map);
    Mat expected = oracle::dense(sm.M);
    const Mat A = oracle::dense(sm.A);
    for (int i = 0; i < map.size(); ++i)
      for (int j = 0; j < map.size(); ++j)
        if (owned[i] && owned[j]) expected(i, j) += A(i, j);
    EXPECT_LT((KR - expected).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Extension, MatrixSelectsTraceBlock) {
  const MeshTopology m = build_structured_mesh(2, 8);
  std::vector<int> cells;
  for (int c = 0; c < 40; ++c) cells.push_back(c);
  const LocalDofMap map = build_local_dofs(m, cells, m.on_boundary);
  const Mat E = oracle::dense(extension_matrix(map));
  ASSERT_EQ(E.rows(), map.size());
  ASSERT_EQ(E.cols(), map.n_B);
  EXPECT_EQ(E.topRows(map.n_B), Mat::Identity(map.n_B, map.n_B));
  EXPECT_EQ(E.bottomRows(map.n_I).cwiseAbs().sum(), 0.0);
  std::vector<double> split(map.size());
  for (int i = 0; i < map.size(); ++i) split[i] = i;
  EXPECT_EQ(to_split_order(map, to_ascending_order(map, split)), split);
}
