#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pucpi/common.hpp"
#include "pucpi/interpolation.hpp"
#include "pucpi/task_io.hpp"

using namespace pucpi;

namespace {

const fixture::Problem& small() {
  static const fixture::Problem p = fixture::square(12, 4, 6, 1e-3, 0.2);
  return p;
}

const fixture::Problem& medium() {
  static const fixture::Problem p = fixture::square(16, 4, 8, 1e-3, 0.2);
  return p;
}

Mat random_traces(int nB, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_matrix(nB, count, rng);
}

}  // namespace

TEST(SpectralConfig, RejectsInvalidParameters) {
  SpectralConfig c;
  c.Lambda = 10;
  EXPECT_NO_THROW(c.validate());
  c.eta = 1.0;
  try {
    c.validate();
    FAIL() << "eta = 1 accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("eta > 1"), std::string::npos);
  }
  c.eta = 2.5;
  c.N = 0;
  EXPECT_THROW(c.validate(), Error);
  c.N = 5;
  c.Lambda = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(LocalTask, ListsAreConsistentWithTheCover) {
  const auto& p = small();
  for (int s = 0; s < p.plan.M; ++s) {
    const LocalTask t = fixture::task(p, s);
    EXPECT_EQ(t.cell_map, p.plan.extension_cells[s]);
    EXPECT_EQ(t.subdomain_cells.size(), p.plan.subdomain_cells[s].size());
    for (size_t i = 0; i < t.subdomain_cells.size(); ++i)
      EXPECT_EQ(t.cell_map[t.subdomain_cells[i]], p.plan.subdomain_cells[s][i]);
    for (int v : t.owned_vertices) EXPECT_EQ(p.plan.owner[t.vertex_map[v]], s);
    for (int v : t.gamma_vertices) {
      EXPECT_EQ(p.plan.owner[t.vertex_map[v]], s);
      EXPECT_FALSE(p.mesh.on_boundary[t.vertex_map[v]]);
    }
  }
}

TEST(LocalSubspace, DeflatedSolutionsAreOrthogonalToModes) {
  const LocalSubspace ls(fixture::task(small(), 0));
  ASSERT_GT(ls.modes().size(), 0);
  const Mat W = random_traces(ls.n_B(), 5, 3);
  for (size_t i = 0; i < ls.nodes().size(); ++i)
    for (int j = 0; j < W.cols(); ++j) {
      const Vec z = ls.apply_Zh_node(static_cast<int>(i), W.col(j));
      const Vec proj = ls.modes().vectors.transpose() * (ls.M_II() * z);
      EXPECT_LE(proj.cwiseAbs().maxCoeff(), 1e-8 * z.norm());
    }
}

TEST(LocalSubspace, ModesMatchDenseSpectrumBelowCutoff) {
  const LocalSubspace ls(fixture::task(small(), 1));
  const auto e = oracle::dense_eig(oracle::dense(ls.A_II()), oracle::dense(ls.M_II()));
  const double cut = ls.task().config.Lambda_tilde();
  const int expected = static_cast<int>((e.values.array() <= cut).count());
  ASSERT_EQ(ls.modes().size(), expected);
  for (int k = 0; k < expected; ++k) EXPECT_NEAR(ls.modes().values[k], e.values[k], 1e-9 * e.values[k]);
}

TEST(LocalSubspace, PoleOperatorMatchesSpectralExpansion) {
  const LocalSubspace ls(fixture::task(small(), 2));
  const Mat W = random_traces(ls.n_B(), 4, 5);
  for (double t : {0.0, 0.3 * ls.task().config.Lambda, ls.nodes()[2], ls.task().config.Lambda}) {
    const Mat Zd = oracle::z_spectral(ls, t) * W;
    const Mat Z = ls.apply_Zh(t, W);
    EXPECT_LE((Z - Zd).norm(), 1e-9 * Zd.norm()) << "t = " << t;
  }
}

TEST(LocalSubspace, TraceNormSolveInvertsSchurComplement) {
  const LocalSubspace ls(fixture::task(small(), 0));
  ASSERT_LE(ls.n_B() + ls.n_I(), 200);
  const Mat S = oracle::schur(oracle::dense(ls.K()), ls.n_B());
  const Mat X = random_traces(ls.n_B(), 6, 9);
  for (int j = 0; j < X.cols(); ++j) {
    const Vec y = ls.apply_Sinv(X.col(j));
    EXPECT_LE((S * y - X.col(j)).norm(), 1e-9 * X.col(j).norm());
  }
}

TEST(LocalSubspace, LinearizedOperatorMatchesDenseForm) {
  const LocalSubspace ls(fixture::task(small(), 3));
  const Mat F = oracle::factor_columns(ls);
  EXPECT_LE((F * F.transpose() - oracle::dense(ls.K_R())).norm(), 1e-12 * oracle::dense(ls.K_R()).norm());
  const Mat C = oracle::densify(ls.n_U(), [&](const Vec& x) { return ls.apply_cct(x); });
  const Mat Cd = oracle::cct_dense(ls, F);
  EXPECT_LE((C - Cd).norm(), 1e-9 * Cd.norm());
  EXPECT_LE((C - C.transpose()).norm(), 1e-9 * C.norm());
}

TEST(LocalSubspace, SingularValuesAreOrderedAndRespectCutoff) {
  const auto& p = small();
  for (int s = 0; s < p.plan.M; ++s) {
    const LocalSubspace ls(fixture::task(p, s));
    const Truncation tr = ls.truncate(1e-3);
    for (int k = 1; k < tr.k; ++k) EXPECT_LE(tr.sigma[k], tr.sigma[k - 1] * (1 + 1e-12));
    if (tr.k >= 1) {
      EXPECT_GT(tr.sigma[tr.k - 1], 1e-3);
      EXPECT_LE(tr.tail, 1e-3);
    }
    // Dense spectrum of the linearized operator as the oracle for k and the tail.
    const Mat C = oracle::densify(ls.n_U(), [&](const Vec& x) { return ls.apply_cct(x); });
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (C + C.transpose()));
    const Vec th = es.eigenvalues().reverse();
    int k = 0;
    while (k < th.size() && th[k] > 1e-6) ++k;
    EXPECT_EQ(tr.k, k);
    for (int j = 0; j < tr.k; ++j) EXPECT_NEAR(tr.sigma[j], std::sqrt(th[j]), 1e-7 * std::sqrt(th[0]));
  }
}

TEST(LocalSubspace, SingularValueCountModeMatchesThresholdMode) {
  const LocalSubspace ls(fixture::task(small(), 0));
  const Truncation tr = ls.truncate(1e-3);
  const auto s = ls.singular_values(tr.k);
  ASSERT_EQ(static_cast<int>(s.size()), tr.k);
  for (int j = 0; j < tr.k; ++j) EXPECT_NEAR(s[j], tr.sigma[j], 1e-8 * tr.sigma[0]);
}

TEST(BuildLocalBasis, OrthonormalizesAndDiagonalizes) {
  const LocalSubspace ls(fixture::task(medium(), 1));
  const LocalBasisResult r = ls.build(ls.truncate(1e-3), true);
  ASSERT_GT(r.n, 0);
  const auto& own = r.basis_vertices;
  // Owned-block stiffness and mass on the global numbering.
  GlobalDofs gd = build_global_dofs(medium().mesh);
  std::vector<int> cells(medium().mesh.num_cells());
  for (size_t c = 0; c < cells.size(); ++c) cells[c] = static_cast<int>(c);
  const StiffnessMass g = assemble(medium().mesh, cells, gd.dof_of_vertex, gd.size());
  Mat A0(own.size(), own.size()), M0(own.size(), own.size());
  const Mat Ag(g.A), Mg(g.M);
  for (size_t i = 0; i < own.size(); ++i)
    for (size_t j = 0; j < own.size(); ++j) {
      A0(i, j) = Ag(gd.dof_of_vertex[own[i]], gd.dof_of_vertex[own[j]]);
      M0(i, j) = Mg(gd.dof_of_vertex[own[i]], gd.dof_of_vertex[own[j]]);
    }
  const Mat QMQ = r.basis.transpose() * M0 * r.basis;
  const Mat QAQ = r.basis.transpose() * A0 * r.basis;
  const double dmax = *std::max_element(r.d.begin(), r.d.end());
  EXPECT_LE((QMQ - Mat::Identity(r.n, r.n)).cwiseAbs().maxCoeff(), 1e-9);
  Mat D = Mat::Zero(r.n, r.n);
  for (int l = 0; l < r.n; ++l) D(l, l) = r.d[l];
  EXPECT_LE((QAQ - D).cwiseAbs().maxCoeff(), 1e-9 * dmax);
  for (double d : r.d) EXPECT_GT(d, 0.0);
  for (int l = 1; l < r.n; ++l) EXPECT_LE(r.d[l - 1], r.d[l]);
}

TEST(BuildLocalBasis, PreservesSpanAndDropsDependentColumns) {
  std::mt19937_64 rng(11);
  const int n = 40;
  const Mat X = oracle::random_matrix(n, n, rng);
  const Mat Md = X * X.transpose() + n * Mat::Identity(n, n);
  const Mat Y = oracle::random_matrix(n, n, rng);
  const Mat Ad = Y * Y.transpose() + Mat::Identity(n, n);
  Mat Q = oracle::random_matrix(n, 8, rng);
  Q.col(7) = Q.col(0) + 2.0 * Q.col(3);  // exactly dependent
  std::vector<double> d;
  const Mat Qt = build_local_basis(Q, Ad.sparseView(), Md.sparseView(), d);
  EXPECT_EQ(Qt.cols(), 7);
  EXPECT_LE(oracle::subspace_gap(Qt, Q.leftCols(7), Md), 1e-8);
  EXPECT_LE(oracle::subspace_gap(Q.leftCols(7), Qt, Md), 1e-8);
  EXPECT_LE((Qt.transpose() * Md * Qt - Mat::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LocalSubspace, PipelineIsDeterministic) {
  const LocalTask t = fixture::task(small(), 2);
  const std::string a = result_to_string(compute_local_basis(t));
  const std::string b = result_to_string(compute_local_basis(t));
  EXPECT_EQ(a, b);
}

TEST(LocalSubspace, SerializedTaskGivesIdenticalResult) {
  const LocalTask t = fixture::task(small(), 1);
  std::istringstream is(task_to_string(t));
  const LocalTask u = read_task(is);
  EXPECT_EQ(task_to_string(u), task_to_string(t));
  EXPECT_EQ(result_to_string(compute_local_basis(u)), result_to_string(compute_local_basis(t)));
  std::istringstream rs(result_to_string(compute_local_basis(t)));
  EXPECT_EQ(result_to_string(read_result(rs)), result_to_string(compute_local_basis(t)));
}

TEST(InterpolationProbe, ExactAtNodesAndWithinBound) {
  const LocalSubspace ls(fixture::task(medium(), 0));
  ASSERT_LE(ls.n_B() + ls.n_I(), 500);
  const double L = ls.task().config.Lambda;
  std::vector<double> grid;
  for (int i = 0; i < 50; ++i) grid.push_back(L * i / 49.0);
  const InterpProbe pr = ls.interp_error_probe(grid, random_traces(ls.n_B(), 10, 21));
  EXPECT_EQ(pr.probes, 500);
  EXPECT_LE(pr.max_at_nodes, 1e-11);
  EXPECT_LE(pr.max_ratio0, 1.0);
  EXPECT_LE(pr.max_ratio1, 1.0);
  RecordProperty("max_relative", std::to_string(pr.max_relative));
  std::printf("interp probe: e0 %.3e e1 %.3e ratio0 %.3e ratio1 %.3e relative %.3e\n", pr.max_e0, pr.max_e1,
              pr.max_ratio0, pr.max_ratio1, pr.max_relative);
}

TEST(InterpolationProbe, ErrorDecaysWithNodeCount) {
  const auto& p = medium();
  std::vector<double> grid;
  for (int i = 0; i < 50; ++i) grid.push_back(p.Lambda * i / 49.0);
  const Mat W = random_traces(LocalSubspace(fixture::task(p, 0)).n_B(), 10, 4);
  double prev = -1;
  for (int N = 2; N <= 6; ++N) {
    LocalTask t = fixture::task(p, 0);
    t.config.N = N;
    const InterpProbe pr = LocalSubspace(t).interp_error_probe(grid, W);
    if (prev > 0) EXPECT_LE(pr.max_e1, prev * (1.0 / (4.0 * (2.5 - 1.0)) + 0.5)) << "N = " << N;
    prev = pr.max_e1;
  }
}
