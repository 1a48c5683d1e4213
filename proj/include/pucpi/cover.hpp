#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pucpi/dofs.hpp"
#include "pucpi/mesh.hpp"

namespace pucpi {

/// Overlapping cover of the mesh built from disjoint vertex sets.
struct CoverPlan {
  int M = 0;
  std::vector<int> owner;                         ///< vertex -> index of its vertex set
  std::vector<std::vector<int>> vertex_sets;      ///< ascending vertex indices
  std::vector<std::vector<int>> subdomain_cells;  ///< U: cells with a vertex in the set
  std::vector<std::vector<int>> extension_cells;  ///< extended subdomain, contains U
  std::vector<int> gamma_cells;                   ///< cells with vertices in >= 2 sets
  std::vector<double> empirical_radius;           ///< 0 when the set is too small for PCA
  std::vector<double> radius;                     ///< requested extension radius
  std::vector<double> effective_radius;           ///< smallest radius whose ball yields the extension
  std::vector<LocalDofMap> subdomain_dofs;
  std::vector<LocalDofMap> extension_dofs;
};

/// Deterministic greedy growth from M farthest-point seeds. Returns a label per vertex.
std::vector<int> partition_vertices(const MeshTopology& mesh, int M, std::uint64_t seed);

std::vector<std::vector<int>> sets_from_labels(std::span<const int> labels, int M);

/// U for each vertex set: the cells with at least one vertex in the set (ascending).
std::vector<std::vector<int>> build_subdomains(const MeshTopology& mesh,
                                               std::span<const int> owner, int M);

/// First pair (p, q), p != q, with U_q contained in U_p; nullopt when no containment exists.
std::optional<std::pair<int, int>> find_contained_subdomain(
    const std::vector<std::vector<int>>& subdomain_cells);

enum class LayerPolicy {
  enforce,  ///< add two cell layers around U whatever r is
  strict,   ///< reject r when the r-ball alone leaves trace vertices next to U
};

struct Extension {
  std::vector<int> cells;
  double effective_radius = 0.0;
  /// Smallest r whose ball already contains the two-layer neighbourhood of U.
  double required_radius = 0.0;
};

/// Cells K with dist(K, U) <= r, where dist is the minimum Euclidean distance between a vertex
/// of K and a vertex of U. Throws Error("cover") under the strict policy when r is too small.
Extension build_extension(const MeshTopology& mesh, std::span<const int> subdomain_cells,
                          double r, LayerPolicy policy = LayerPolicy::enforce);

std::vector<int> overlap_set(const MeshTopology& mesh, std::span<const int> owner);

/// Unit first principal direction of a point set. Ties inside the leading eigenspace pick the
/// direction of the farthest pair of points, then the lexicographically largest |u|.
Point principal_direction(std::span<const Point> points, int dim);

/// Half the spread of the set along its first principal direction.
double empirical_radius(const MeshTopology& mesh, std::span<const int> vertex_set);

struct CoverOptions {
  int M = 4;
  std::uint64_t seed = 1;
  double radius_factor = 0.2;
  LayerPolicy policy = LayerPolicy::enforce;
  /// Externally computed labels; replaces the built-in partitioner when non-empty.
  std::vector<int> labels;
};

CoverPlan build_cover(const MeshTopology& mesh, const CoverOptions& options);

/// Throws Error("cover") naming the first violated cover invariant.
void validate_cover(const MeshTopology& mesh, const CoverPlan& plan);

/// Number of subdomains (G) and extended subdomains (G-hat) containing each cell.
void counting_functions(const MeshTopology& mesh, const CoverPlan& plan, std::vector<int>& G,
                        std::vector<int>& G_hat);

}  // namespace pucpi
