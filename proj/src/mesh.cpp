#include "pucpi/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pucpi/common.hpp"

namespace pucpi {

namespace {

using Facet = std::array<int, 3>;

Facet facet_key(const MeshTopology& mesh, int c, int skip) {
  Facet f{-1, -1, -1};
  int k = 0;
  for (int i = 0; i <= mesh.dim; ++i)
    if (i != skip) f[k++] = mesh.cells[c][i];
  std::sort(f.begin(), f.begin() + mesh.dim);
  return f;
}

/// Sorted list of (facet, cell) over the given cells; equal facets end up adjacent.
std::vector<std::pair<Facet, int>> collect_facets(const MeshTopology& mesh,
                                                  std::span<const int> cells) {
  std::vector<std::pair<Facet, int>> facets;
  facets.reserve(cells.size() * static_cast<size_t>(mesh.dim + 1));
  for (int c : cells)
    for (int i = 0; i <= mesh.dim; ++i) facets.emplace_back(facet_key(mesh, c, i), c);
  std::sort(facets.begin(), facets.end());
  return facets;
}

std::vector<int> all_cells(const MeshTopology& mesh) {
  std::vector<int> cells(mesh.cells.size());
  for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  return cells;
}

double dist(const Point& a, const Point& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

std::vector<int> MeshTopology::boundary_vertices() const {
  std::vector<int> out;
  for (int v = 0; v < num_vertices(); ++v)
    if (on_boundary[v]) out.push_back(v);
  return out;
}

MeshTopology build_structured_mesh(int dim, int n) {
  if (dim != 2 && dim != 3) throw Error("mesh", concat("unsupported dimension ", dim));
  if (n < 2) throw Error("mesh", concat("cells_per_side must be >= 2, got ", n));
  MeshTopology mesh;
  mesh.dim = dim;
  const int s = n + 1;
  if (dim == 2) {
    mesh.vertices.reserve(static_cast<size_t>(s) * s);
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i)
        mesh.vertices.push_back({double(i) / n, double(j) / n, 0.0});
    mesh.cells.reserve(2 * static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int v00 = i + j * s, v10 = v00 + 1, v01 = v00 + s, v11 = v01 + 1;
        if ((i + j) % 2 == 0) {
          mesh.cells.push_back({v00, v10, v11, -1});
          mesh.cells.push_back({v00, v11, v01, -1});
        } else {
          mesh.cells.push_back({v00, v10, v01, -1});
          mesh.cells.push_back({v10, v11, v01, -1});
        }
      }
  } else {
    mesh.vertices.reserve(static_cast<size_t>(s) * s * s);
    for (int k = 0; k <= n; ++k)
      for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
          mesh.vertices.push_back({double(i) / n, double(j) / n, double(k) / n});
    const int stride[3] = {1, s, s * s};
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    mesh.cells.reserve(6 * static_cast<size_t>(n) * n * n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const int base = i + j * s + k * s * s;
          for (const auto& p : perms) {
            Cell c{base, base + stride[p[0]], base + stride[p[0]] + stride[p[1]],
                   base + stride[0] + stride[1] + stride[2]};
            mesh.cells.push_back(c);
            const int id = mesh.num_cells() - 1;
            if (signed_cell_volume(mesh, id) < 0) std::swap(mesh.cells[id][2], mesh.cells[id][3]);
          }
        }
  }
  refresh_derived(mesh);
  return mesh;
}

Point map_point(const std::string& mapping_id, const Point& x, int dim) {
  if (mapping_id == "identity") return x;
  if (mapping_id == "paper-cube") {
    if (dim != 3) throw Error("mesh", "mapping 'paper-cube' requires a 3D mesh");
    return {x[0] + 0.4 * x[2] * (2.0 * x[0] - 1.0), x[1] + 0.4 * x[2] * (2.0 * x[1] - 1.0), x[2]};
  }
  throw Error("mesh", concat("unknown mapping id '", mapping_id, "'"));
}

MeshTopology map_domain(const MeshTopology& mesh, const std::string& mapping_id) {
  MeshTopology out = mesh;
  for (auto& x : out.vertices) x = map_point(mapping_id, x, mesh.dim);
  out.h = 0.0;
  for (int c = 0; c < out.num_cells(); ++c) out.h = std::max(out.h, cell_diameter(out, c));
  return out;
}

double signed_cell_volume(const MeshTopology& mesh, int c) {
  const Cell& k = mesh.cells[c];
  const Point& a = mesh.vertices[k[0]];
  const Point& b = mesh.vertices[k[1]];
  const Point& d = mesh.vertices[k[2]];
  if (mesh.dim == 2) return 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]));
  const Point& e = mesh.vertices[k[3]];
  const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double v[3] = {d[0] - a[0], d[1] - a[1], d[2] - a[2]};
  const double w[3] = {e[0] - a[0], e[1] - a[1], e[2] - a[2]};
  return (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) +
          u[2] * (v[0] * w[1] - v[1] * w[0])) / 6.0;
}

double cell_diameter(const MeshTopology& mesh, int c) {
  double h = 0.0;
  const auto cell = mesh.cell(c);
  for (size_t i = 0; i < cell.size(); ++i)
    for (size_t j = i + 1; j < cell.size(); ++j)
      h = std::max(h, dist(mesh.vertices[cell[i]], mesh.vertices[cell[j]]));
  return h;
}

double mesh_volume(const MeshTopology& mesh) {
  double v = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) v += std::abs(signed_cell_volume(mesh, c));
  return v;
}

std::vector<char> boundary_of_cells(const MeshTopology& mesh, std::span<const int> cells) {
  std::vector<char> flags(mesh.vertices.size(), 0);
  const auto facets = collect_facets(mesh, cells);
  for (size_t i = 0; i < facets.size();) {
    size_t j = i;
    while (j < facets.size() && facets[j].first == facets[i].first) ++j;
    if (j - i == 1)
      for (int k = 0; k < mesh.dim; ++k) flags[facets[i].first[k]] = 1;
    i = j;
  }
  return flags;
}

void refresh_derived(MeshTopology& mesh) {
  mesh.on_boundary = boundary_of_cells(mesh, all_cells(mesh));
  mesh.h = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) mesh.h = std::max(mesh.h, cell_diameter(mesh, c));
}

Adjacency vertex_cells(const MeshTopology& mesh) {
  Adjacency adj;
  adj.offsets.assign(mesh.vertices.size() + 1, 0);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int v : mesh.cell(c)) ++adj.offsets[v + 1];
  for (size_t i = 1; i < adj.offsets.size(); ++i) adj.offsets[i] += adj.offsets[i - 1];
  adj.targets.resize(adj.offsets.back());
  std::vector<int> fill(adj.offsets.begin(), adj.offsets.end() - 1);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int v : mesh.cell(c)) adj.targets[fill[v]++] = c;
  return adj;
}

Adjacency vertex_neighbors(const MeshTopology& mesh) {
  const Adjacency vc = vertex_cells(mesh);
  Adjacency adj;
  adj.offsets.assign(mesh.vertices.size() + 1, 0);
  std::vector<int> scratch;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    scratch.clear();
    for (int c : vc[v])
      for (int w : mesh.cell(c))
        if (w != v) scratch.push_back(w);
    std::sort(scratch.begin(), scratch.end());
    scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
    adj.targets.insert(adj.targets.end(), scratch.begin(), scratch.end());
    adj.offsets[v + 1] = static_cast<int>(adj.targets.size());
  }
  return adj;
}

void validate_mesh(const MeshTopology& mesh) {
  if (mesh.dim != 2 && mesh.dim != 3) throw Error("mesh", concat("invalid dimension ", mesh.dim));
  if (mesh.vertices.empty() || mesh.cells.empty()) throw Error("mesh", "empty mesh");
  const int nv = mesh.num_vertices();
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto cell = mesh.cell(c);
    for (size_t i = 0; i < cell.size(); ++i) {
      if (cell[i] < 0 || cell[i] >= nv)
        throw Error("mesh", concat("cell ", c, " references invalid vertex ", cell[i]));
      for (size_t j = 0; j < i; ++j)
        if (cell[i] == cell[j]) throw Error("mesh", concat("cell ", c, " repeats vertex ", cell[i]));
    }
    if (!(signed_cell_volume(mesh, c) > 0.0))
      throw Error("mesh", concat("cell ", c, " has non-positive orientation/volume"));
  }
  const auto facets = collect_facets(mesh, all_cells(mesh));
  std::vector<char> flags(nv, 0);
  for (size_t i = 0; i < facets.size();) {
    size_t j = i;
    while (j < facets.size() && facets[j].first == facets[i].first) ++j;
    if (j - i > 2) throw Error("mesh", concat("facet shared by ", j - i, " cells"));
    if (j - i == 1)
      for (int k = 0; k < mesh.dim; ++k) flags[facets[i].first[k]] = 1;
    i = j;
  }
  if (mesh.on_boundary.size() != static_cast<size_t>(nv))
    throw Error("mesh", "boundary flag array has wrong length");
  for (int v = 0; v < nv; ++v)
    if ((flags[v] != 0) != (mesh.on_boundary[v] != 0))
      throw Error("mesh", concat("boundary flag of vertex ", v, " disagrees with facet incidence"));
}

MeshTopology extract_submesh(const MeshTopology& mesh, std::span<const int> cells,
                             std::vector<int>& vertex_map) {
  vertex_map.clear();
  for (int c : cells)
    for (int v : mesh.cell(c)) vertex_map.push_back(v);
  std::sort(vertex_map.begin(), vertex_map.end());
  vertex_map.erase(std::unique(vertex_map.begin(), vertex_map.end()), vertex_map.end());
  MeshTopology sub;
  sub.dim = mesh.dim;
  sub.vertices.reserve(vertex_map.size());
  for (int v : vertex_map) sub.vertices.push_back(mesh.vertices[v]);
  sub.cells.reserve(cells.size());
  for (int c : cells) {
    Cell k{-1, -1, -1, -1};
    for (int i = 0; i <= mesh.dim; ++i)
      k[i] = static_cast<int>(std::lower_bound(vertex_map.begin(), vertex_map.end(),
                                               mesh.cells[c][i]) - vertex_map.begin());
    sub.cells.push_back(k);
  }
  refresh_derived(sub);
  return sub;
}

void write_mesh(std::ostream& os, const MeshTopology& mesh) {
  os << "pucpi-mesh v1 " << mesh.dim << ' ' << mesh.num_vertices() << ' ' << mesh.num_cells()
     << '\n';
  for (const auto& x : mesh.vertices) {
    for (int i = 0; i < mesh.dim; ++i) os << (i ? " " : "") << format_exact(x[i]);
    os << '\n';
  }
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto cell = mesh.cell(c);
    for (size_t i = 0; i < cell.size(); ++i) os << (i ? " " : "") << cell[i];
    os << '\n';
  }
  bool first = true;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.on_boundary[v]) {
      os << (first ? "" : " ") << v;
      first = false;
    }
  os << '\n';
}

MeshTopology read_mesh(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("mesh", "missing mesh header");
  std::istringstream header(line);
  std::string magic, version;
  MeshTopology mesh;
  int nv = -1, nc = -1;
  header >> magic >> version >> mesh.dim >> nv >> nc;
  if (!header || magic != "pucpi-mesh" || version != "v1")
    throw Error("mesh", concat("bad mesh header '", line, "'"));
  if ((mesh.dim != 2 && mesh.dim != 3) || nv <= 0 || nc <= 0)
    throw Error("mesh", concat("bad mesh sizes in header '", line, "'"));
  mesh.vertices.assign(nv, Point{0.0, 0.0, 0.0});
  for (int v = 0; v < nv; ++v)
    for (int i = 0; i < mesh.dim; ++i)
      if (!(is >> mesh.vertices[v][i])) throw Error("mesh", concat("truncated vertex ", v));
  mesh.cells.assign(nc, Cell{-1, -1, -1, -1});
  for (int c = 0; c < nc; ++c)
    for (int i = 0; i <= mesh.dim; ++i) {
      if (!(is >> mesh.cells[c][i])) throw Error("mesh", concat("truncated cell ", c));
      if (mesh.cells[c][i] < 0 || mesh.cells[c][i] >= nv)
        throw Error("mesh", concat("cell ", c, " references invalid vertex ", mesh.cells[c][i]));
    }
  std::getline(is, line);
  if (!std::getline(is, line)) throw Error("mesh", "missing boundary vertex line");
  mesh.on_boundary.assign(nv, 0);
  std::istringstream bl(line);
  int v;
  while (bl >> v) {
    if (v < 0 || v >= nv) throw Error("mesh", concat("invalid boundary vertex ", v));
    mesh.on_boundary[v] = 1;
  }
  for (int c = 0; c < nc; ++c) mesh.h = std::max(mesh.h, cell_diameter(mesh, c));
  return mesh;
}

void write_mesh_file(const std::filesystem::path& path, const MeshTopology& mesh) {
  std::ofstream os(path);
  if (!os) throw Error("mesh", concat("cannot write ", path.string()));
  write_mesh(os, mesh);
  if (!os) throw Error("mesh", concat("write failed for ", path.string()));
}

MeshTopology read_mesh_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("mesh", concat("cannot open ", path.string()));
  return read_mesh(is);
}

std::vector<int> read_partition_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("mesh", concat("cannot open partition file ", path.string()));
  std::vector<int> labels;
  int x;
  while (is >> x) labels.push_back(x);
  if (!is.eof()) throw Error("mesh", concat("malformed partition file ", path.string()));
  return labels;
}

void write_partition_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream os(path);
  if (!os) throw Error("mesh", concat("cannot write ", path.string()));
  for (int x : labels) os << x << '\n';
}

}  // namespace pucpi
