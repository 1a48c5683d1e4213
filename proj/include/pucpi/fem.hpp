#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <span>
#include <vector>

#include "pucpi/dofs.hpp"
#include "pucpi/mesh.hpp"

namespace pucpi {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Volume and constant barycentric gradients of one P1 simplex.
struct ElementGeometry {
  double volume = 0.0;
  std::array<std::array<double, 3>, 4> grad{};  ///< grad[i] = gradient of the i-th hat function
};

ElementGeometry element_geometry(const MeshTopology& mesh, int c);

/// Closed-form P1 element matrices: K_ij = |T| g_i.g_j and M_ij = |T| (1 + delta_ij) / ((d+1)(d+2)).
void element_matrices(const ElementGeometry& g, int dim, double K[4][4], double Mm[4][4]);

struct StiffnessMass {
  SpMat A;
  SpMat M;
};

/// Assembles stiffness and mass over `cells` onto the DOFs of `dof_of_vertex` (-1 = no DOF).
/// Both matrices are stored in full and are exactly symmetric.
StiffnessMass assemble(const MeshTopology& mesh, std::span<const int> cells,
                       std::span<const int> dof_of_vertex, int n);

/// Assembly on the local boundary-first DOFs of a cell set.
StiffnessMass assemble_local(const MeshTopology& mesh, std::span<const int> cells,
                             const LocalDofMap& map);

/// A and M on a cell set with homogeneous Dirichlet conditions on `dirichlet` vertices.
struct LocalSystem {
  SpMat A;
  SpMat M;
  LocalDofMap dofs;
};
LocalSystem assemble_stiffness_mass(const MeshTopology& mesh, std::span<const int> cells,
                                    const std::vector<char>& dirichlet);

/// H1 Gram matrix A + M on the DOFs of an extended subdomain (no elimination on its boundary).
SpMat assemble_K(const MeshTopology& mesh, std::span<const int> cells, const LocalDofMap& map);

/// Gram matrix of the stitched H1 inner product on U: stiffness restricted to owned DOFs plus
/// the full mass of U. `owned[i]` flags the local DOFs kept by the stitching operator.
SpMat assemble_KR(const MeshTopology& mesh, std::span<const int> cells, const LocalDofMap& map,
                  const std::vector<char>& owned);

/// Local DOFs of U kept by stitching: those whose vertex belongs to the subdomain's vertex set.
std::vector<char> owned_mask(const LocalDofMap& map, std::span<const int> owner, int p);

/// n x n_B matrix: identity on the trace block, zero on the interior block.
SpMat extension_matrix(const LocalDofMap& map);

/// Global-by-local matrix of the stitching operator: maps local U coefficients to global DOFs,
/// keeping owned DOFs only.
SpMat stitching_matrix(const LocalDofMap& map, const std::vector<char>& owned,
                       const GlobalDofs& global);

/// Local-by-global restriction of global coefficients to the DOFs of a cell set.
SpMat restriction_matrix(const LocalDofMap& map, const GlobalDofs& global);

/// Leading/trailing blocks of a matrix in boundary-first ordering.
SpMat block(const SpMat& X, int row0, int rows, int col0, int cols);

double norm1(const SpMat& X);

/// Coordinate text dump of the lower triangle ("i j value", 17 significant digits).
void dump_lower(std::ostream& os, const SpMat& X);

}  // namespace pucpi
