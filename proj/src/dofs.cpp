#include "pucpi/dofs.hpp"

#include <algorithm>
#include <numeric>

#include "pucpi/common.hpp"

namespace pucpi {

std::vector<int> LocalDofMap::index_of_vertex(int num_vertices) const {
  std::vector<int> idx(num_vertices, -1);
  for (size_t i = 0; i < vertices.size(); ++i) idx[vertices[i]] = static_cast<int>(i);
  return idx;
}

std::vector<int> LocalDofMap::permutation_to_ascending() const {
  std::vector<int> order(vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return vertices[a] < vertices[b]; });
  std::vector<int> perm(vertices.size());
  for (size_t pos = 0; pos < order.size(); ++pos) perm[order[pos]] = static_cast<int>(pos);
  return perm;
}

LocalDofMap build_local_dofs(const MeshTopology& mesh, std::span<const int> cells,
                             const std::vector<char>& dirichlet) {
  const std::vector<char> boundary = boundary_of_cells(mesh, cells);
  std::vector<char> present(mesh.vertices.size(), 0);
  for (int c : cells)
    for (int v : mesh.cell(c)) present[v] = 1;
  LocalDofMap map;
  std::vector<int> interior;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (!present[v] || dirichlet[v]) continue;
    if (boundary[v])
      map.vertices.push_back(v);
    else
      interior.push_back(v);
  }
  map.n_B = static_cast<int>(map.vertices.size());
  map.n_I = static_cast<int>(interior.size());
  map.vertices.insert(map.vertices.end(), interior.begin(), interior.end());
  return map;
}

GlobalDofs build_global_dofs(const MeshTopology& mesh) {
  GlobalDofs g;
  g.dof_of_vertex.assign(mesh.vertices.size(), -1);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (!mesh.on_boundary[v]) {
      g.dof_of_vertex[v] = g.size();
      g.vertices.push_back(v);
    }
  return g;
}

std::vector<double> to_ascending_order(const LocalDofMap& map, std::span<const double> split) {
  if (split.size() != map.vertices.size()) throw Error("fem", "vector length mismatch");
  const auto perm = map.permutation_to_ascending();
  std::vector<double> out(split.size());
  for (size_t i = 0; i < split.size(); ++i) out[perm[i]] = split[i];
  return out;
}

std::vector<double> to_split_order(const LocalDofMap& map, std::span<const double> ascending) {
  if (ascending.size() != map.vertices.size()) throw Error("fem", "vector length mismatch");
  const auto perm = map.permutation_to_ascending();
  std::vector<double> out(ascending.size());
  for (size_t i = 0; i < ascending.size(); ++i) out[i] = ascending[perm[i]];
  return out;
}

}  // namespace pucpi
