#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pucpi {

using Point = std::array<double, 3>;
/// Vertex indices of a simplex; triangles use the first three slots and store -1 in the last.
using Cell = std::array<int, 4>;

/// Conforming simplicial mesh of a bounded domain (triangles in 2D, tetrahedra in 3D).
struct MeshTopology {
  int dim = 2;
  std::vector<Point> vertices;
  std::vector<Cell> cells;
  /// One flag per vertex: true iff the vertex lies on a facet owned by a single cell.
  std::vector<char> on_boundary;
  /// Largest cell diameter.
  double h = 0.0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int vertices_per_cell() const { return dim + 1; }
  std::span<const int> cell(int c) const { return {cells[c].data(), static_cast<size_t>(dim + 1)}; }
  std::vector<int> boundary_vertices() const;
};

/// Compressed adjacency lists (CSR layout).
struct Adjacency {
  std::vector<int> offsets;
  std::vector<int> targets;

  std::span<const int> operator[](int i) const {
    return {targets.data() + offsets[i], static_cast<size_t>(offsets[i + 1] - offsets[i])};
  }
  int size() const { return static_cast<int>(offsets.size()) - 1; }
};

/// Uniform triangulation of the unit square or cube with `cells_per_side` intervals per axis.
/// Squares are split along alternating diagonals, which keeps the full symmetry group of
/// the square for even `cells_per_side`; cubes use the 6-tetrahedron Kuhn split.
MeshTopology build_structured_mesh(int dim, int cells_per_side);

/// Applies a named vertex map ("identity", or "paper-cube" for the sheared cube
/// x -> (x1 + 0.4 x3 (2 x1 - 1), x2 + 0.4 x3 (2 x2 - 1), x3)). Topology is unchanged.
MeshTopology map_domain(const MeshTopology& mesh, const std::string& mapping_id);
Point map_point(const std::string& mapping_id, const Point& x, int dim);

double signed_cell_volume(const MeshTopology& mesh, int c);
double cell_diameter(const MeshTopology& mesh, int c);
double mesh_volume(const MeshTopology& mesh);

/// Recomputes `on_boundary` from facet incidence and `h` from the cell diameters.
void refresh_derived(MeshTopology& mesh);

/// Vertex flags of the facets that belong to exactly one cell of `cells`.
std::vector<char> boundary_of_cells(const MeshTopology& mesh, std::span<const int> cells);

Adjacency vertex_neighbors(const MeshTopology& mesh);
Adjacency vertex_cells(const MeshTopology& mesh);

/// Throws Error("mesh", ...) describing the first violated invariant: index range,
/// orientation, facet sharing (no facet in more than two cells), boundary flags.
void validate_mesh(const MeshTopology& mesh);

/// Extracts the cells `cells` of `mesh` as a standalone mesh. `vertex_map` receives the
/// original index of each new vertex (ascending).
MeshTopology extract_submesh(const MeshTopology& mesh, std::span<const int> cells,
                             std::vector<int>& vertex_map);

void write_mesh(std::ostream& os, const MeshTopology& mesh);
MeshTopology read_mesh(std::istream& is);
void write_mesh_file(const std::filesystem::path& path, const MeshTopology& mesh);
MeshTopology read_mesh_file(const std::filesystem::path& path);

/// Partition-label file: one integer subdomain label per vertex line.
std::vector<int> read_partition_labels(const std::filesystem::path& path);
void write_partition_labels(const std::filesystem::path& path, std::span<const int> labels);

}  // namespace pucpi
