#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "pucpi/common.hpp"
#include "pucpi/cover.hpp"

using namespace pucpi;

namespace {

double vertex_distance(const MeshTopology& m, int a, int b) {
  double s = 0;
  for (int i = 0; i < m.dim; ++i) s += (m.vertices[a][i] - m.vertices[b][i]) * (m.vertices[a][i] - m.vertices[b][i]);
  return std::sqrt(s);
}

}  // namespace

TEST(Partition, DisjointCompleteAndDeterministic) {
  const MeshTopology m = build_structured_mesh(2, 16);
  const auto labels = partition_vertices(m, 5, 7);
  ASSERT_EQ(static_cast<int>(labels.size()), m.num_vertices());
  std::vector<int> sizes(5, 0);
  for (int l : labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 5);
    ++sizes[l];
  }
  for (int s : sizes) EXPECT_GT(s, 0);
  EXPECT_EQ(labels, partition_vertices(m, 5, 7));
}

TEST(Partition, PartsAreConnected) {
  const MeshTopology m = build_structured_mesh(3, 6);
  const auto labels = partition_vertices(m, 4, 3);
  const Adjacency nb = vertex_neighbors(m);
  for (int p = 0; p < 4; ++p) {
    std::vector<int> members;
    for (int v = 0; v < m.num_vertices(); ++v)
      if (labels[v] == p) members.push_back(v);
    std::vector<char> seen(m.num_vertices(), 0);
    std::vector<int> stack{members[0]};
    seen[members[0]] = 1;
    int reached = 0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      ++reached;
      for (int w : nb[v])
        if (!seen[w] && labels[w] == p) seen[w] = 1, stack.push_back(w);
    }
    EXPECT_EQ(reached, static_cast<int>(members.size())) << "part " << p;
  }
}

TEST(Cover, InvariantsHold) {
  const MeshTopology m = build_structured_mesh(2, 20);
  CoverOptions o;
  o.M = 4;
  const CoverPlan plan = build_cover(m, o);
  EXPECT_NO_THROW(validate_cover(m, plan));
  for (int p = 0; p < plan.M; ++p) {
    EXPECT_TRUE(std::includes(plan.extension_cells[p].begin(), plan.extension_cells[p].end(),
                              plan.subdomain_cells[p].begin(), plan.subdomain_cells[p].end()));
  }
  std::vector<int> G, Ghat;
  counting_functions(m, plan, G, Ghat);
  for (int c = 0; c < m.num_cells(); ++c) {
    EXPECT_GE(G[c], 1);
    EXPECT_GE(Ghat[c], G[c]);
  }
}

TEST(Cover, SubdomainsAreCellsTouchingTheVertexSet) {
  const MeshTopology m = build_structured_mesh(2, 10);
  CoverOptions o;
  o.M = 3;
  const CoverPlan plan = build_cover(m, o);
  for (int p = 0; p < plan.M; ++p) {
    std::vector<int> expected;
    for (int c = 0; c < m.num_cells(); ++c) {
      bool touches = false;
      for (int v : m.cell(c)) touches = touches || plan.owner[v] == p;
      if (touches) expected.push_back(c);
    }
    EXPECT_EQ(plan.subdomain_cells[p], expected);
  }
}

TEST(Cover, OverlapSetMatchesDefinition) {
  const MeshTopology m = build_structured_mesh(3, 5);
  const auto owner = partition_vertices(m, 4, 1);
  std::vector<int> expected;
  for (int c = 0; c < m.num_cells(); ++c) {
    std::set<int> sets;
    for (int v : m.cell(c)) sets.insert(owner[v]);
    if (sets.size() >= 2) expected.push_back(c);
  }
  EXPECT_EQ(overlap_set(m, owner), expected);
}

TEST(Extension, ContainsBallAndTwoLayers) {
  const MeshTopology m = build_structured_mesh(2, 16);
  const auto owner = partition_vertices(m, 4, 1);
  const auto U = build_subdomains(m, owner, 4);
  const double r = 0.15;
  const Extension ext = build_extension(m, U[0], r);
  std::set<int> uverts;
  for (int c : U[0])
    for (int v : m.cell(c)) uverts.insert(v);
  std::set<int> ecells(ext.cells.begin(), ext.cells.end());
  for (int c = 0; c < m.num_cells(); ++c) {
    double d = 1e300;
    for (int v : m.cell(c))
      for (int u : uverts) d = std::min(d, vertex_distance(m, v, u));
    if (d <= r) EXPECT_TRUE(ecells.count(c)) << "cell " << c << " at distance " << d;
  }
  // Cells touching a vertex of U, and the next layer, always belong to the extension.
  const Adjacency vc = vertex_cells(m);
  std::set<int> layer1, l1verts;
  for (int u : uverts)
    for (int c : vc[u]) layer1.insert(c);
  for (int c : layer1)
    for (int v : m.cell(c)) l1verts.insert(v);
  for (int v : l1verts)
    for (int c : vc[v]) EXPECT_TRUE(ecells.count(c));
}

TEST(Extension, GrowsWithRadius) {
  const MeshTopology m = build_structured_mesh(2, 16);
  const auto owner = partition_vertices(m, 4, 1);
  const auto U = build_subdomains(m, owner, 4);
  size_t prev = 0;
  for (double r : {0.0, 0.1, 0.3, 0.6}) {
    const Extension e = build_extension(m, U[1], r);
    EXPECT_GE(e.cells.size(), prev);
    prev = e.cells.size();
  }
}

TEST(Extension, StrictPolicyRejectsZeroRadius) {
  const MeshTopology m = build_structured_mesh(2, 16);
  const auto owner = partition_vertices(m, 4, 1);
  const auto U = build_subdomains(m, owner, 4);
  EXPECT_THROW(build_extension(m, U[0], 0.0, LayerPolicy::strict), Error);
  const Extension wide = build_extension(m, U[0], 0.0, LayerPolicy::enforce);
  EXPECT_NO_THROW(build_extension(m, U[0], wide.required_radius, LayerPolicy::strict));
}

TEST(PrincipalDirection, AxisAlignedAndTies) {
  std::vector<Point> line;
  for (int i = 0; i < 10; ++i) line.push_back({0.1 * i, 0.5, 0.0});
  const Point u = principal_direction(line, 2);
  EXPECT_NEAR(std::abs(u[0]), 1.0, 1e-12);
  EXPECT_NEAR(u[1], 0.0, 1e-12);
  // A square of points has a degenerate covariance; the farthest pair is a diagonal.
  const std::vector<Point> square{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  const Point d = principal_direction(square, 2);
  EXPECT_NEAR(std::abs(d[0]), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(std::abs(d[1]), std::sqrt(0.5), 1e-12);
  EXPECT_GT(d[0], 0.0);
}

TEST(Cover, LabelsOverridePartitioner) {
  const MeshTopology m = build_structured_mesh(2, 8);
  CoverOptions o;
  o.M = 2;
  o.labels.resize(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) o.labels[v] = m.vertices[v][0] < 0.5 ? 0 : 1;
  const CoverPlan plan = build_cover(m, o);
  EXPECT_EQ(plan.owner, o.labels);
  o.labels.pop_back();
  EXPECT_THROW(build_cover(m, o), Error);
}

TEST(Cover, RejectsSingleSubdomain) {
  const MeshTopology m = build_structured_mesh(2, 8);
  CoverOptions o;
  o.M = 1;
  EXPECT_THROW(build_cover(m, o), Error);
}
