#pragma once

#include <span>
#include <vector>

#include "pucpi/mesh.hpp"

namespace pucpi {

/// Degrees of freedom of a cell set in the local boundary-first ordering.
/// Vertices flagged Dirichlet carry no DOF. Trace DOFs are the remaining vertices on the
/// topological boundary of the cell set; they occupy positions [0, n_B), ascending by vertex
/// index, followed by the interior DOFs, also ascending.
struct LocalDofMap {
  std::vector<int> vertices;  ///< vertex index of each local DOF
  int n_B = 0;
  int n_I = 0;

  int size() const { return n_B + n_I; }
  /// Dense lookup vertex -> local DOF (-1 when absent), sized to `num_vertices`.
  std::vector<int> index_of_vertex(int num_vertices) const;
  /// perm[i] = position of local DOF i in ascending-vertex order.
  std::vector<int> permutation_to_ascending() const;
};

LocalDofMap build_local_dofs(const MeshTopology& mesh, std::span<const int> cells,
                             const std::vector<char>& dirichlet);

/// Global DOFs: every vertex not on the boundary of the domain, in ascending vertex order.
struct GlobalDofs {
  std::vector<int> vertices;
  std::vector<int> dof_of_vertex;  ///< -1 on Dirichlet vertices

  int size() const { return static_cast<int>(vertices.size()); }
};

GlobalDofs build_global_dofs(const MeshTopology& mesh);

/// Reorders a vector given in split (boundary-first) order into ascending-vertex order and back.
std::vector<double> to_ascending_order(const LocalDofMap& map, std::span<const double> split);
std::vector<double> to_split_order(const LocalDofMap& map, std::span<const double> ascending);

}  // namespace pucpi
