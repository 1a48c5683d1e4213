#include "pucpi/cover.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "pucpi/common.hpp"

namespace pucpi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Uniform bucket grid over a fixed point set for exact nearest-point queries with a cutoff.
class GridLocator {
 public:
  GridLocator(std::vector<Point> points, int dim, double bucket)
      : points_(std::move(points)), dim_(dim), b_(bucket) {
    lo_ = {kInf, kInf, kInf};
    hi_ = {-kInf, -kInf, -kInf};
    for (const auto& x : points_)
      for (int i = 0; i < 3; ++i) {
        lo_[i] = std::min(lo_[i], x[i]);
        hi_[i] = std::max(hi_[i], x[i]);
      }
    for (int i = 0; i < 3; ++i)
      n_[i] = (i < dim_) ? static_cast<int>(std::floor((hi_[i] - lo_[i]) / b_)) + 1 : 1;
    const size_t total = static_cast<size_t>(n_[0]) * n_[1] * n_[2];
    offsets_.assign(total + 1, 0);
    std::vector<size_t> key(points_.size());
    for (size_t k = 0; k < points_.size(); ++k) {
      key[k] = flat(coord(points_[k]));
      ++offsets_[key[k] + 1];
    }
    for (size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    ids_.resize(points_.size());
    std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
    for (size_t k = 0; k < points_.size(); ++k) ids_[fill[key[k]]++] = static_cast<int>(k);
  }

  /// Distance from x to the nearest stored point when it is <= cutoff, else +inf.
  double nearest(const Point& x, double cutoff) const {
    double box = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double e = std::max({lo_[i] - x[i], 0.0, x[i] - hi_[i]});
      box += e * e;
    }
    if (std::sqrt(box) > cutoff) return kInf;
    std::array<int, 3> c;
    for (int i = 0; i < 3; ++i) {
      const double t = (i < dim_) ? std::floor((x[i] - lo_[i]) / b_) : 0.0;
      c[i] = static_cast<int>(std::clamp(t, -1e9, 1e9));
    }
    const int max_ring = static_cast<int>(std::ceil(cutoff / b_)) + 1;
    double best = kInf;
    for (int ring = 0; ring <= max_ring; ++ring) {
      if ((ring - 1) * b_ > cutoff) break;
      scan_ring(c, ring, x, best);
      // Points in rings > ring lie at distance >= ring * b.
      if (best <= ring * b_) break;
    }
    return best <= cutoff ? best : kInf;
  }

 private:
  std::array<int, 3> coord(const Point& x) const {
    std::array<int, 3> c{0, 0, 0};
    for (int i = 0; i < dim_; ++i)
      c[i] = std::clamp(static_cast<int>(std::floor((x[i] - lo_[i]) / b_)), 0, n_[i] - 1);
    return c;
  }
  size_t flat(const std::array<int, 3>& c) const {
    return static_cast<size_t>(c[0]) + static_cast<size_t>(n_[0]) * (c[1] + static_cast<size_t>(n_[1]) * c[2]);
  }
  void scan_bucket(int i, int j, int k, const Point& x, double& best) const {
    if (i < 0 || j < 0 || k < 0 || i >= n_[0] || j >= n_[1] || k >= n_[2]) return;
    const size_t f = flat({i, j, k});
    for (int q = offsets_[f]; q < offsets_[f + 1]; ++q) best = std::min(best, distance(x, points_[ids_[q]]));
  }
  void scan_ring(const std::array<int, 3>& c, int ring, const Point& x, double& best) const {
    const int rz = dim_ == 3 ? ring : 0;
    for (int dk = -rz; dk <= rz; ++dk)
      for (int dj = -ring; dj <= ring; ++dj)
        for (int di = -ring; di <= ring; ++di) {
          if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != ring) continue;
          scan_bucket(c[0] + di, c[1] + dj, c[2] + dk, x, best);
        }
  }

  std::vector<Point> points_;
  int dim_;
  double b_;
  Point lo_, hi_;
  std::array<int, 3> n_{1, 1, 1};
  std::vector<int> offsets_;
  std::vector<int> ids_;
};

bool lex_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i] + tol) return true;
    if (a[i] < b[i] - tol) return false;
  }
  return false;
}

void fix_sign(Eigen::VectorXd& u) {
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (std::abs(u[i]) > 1e-14) {
      if (u[i] < 0) u = -u;
      return;
    }
}

}  // namespace

std::vector<int> partition_vertices(const MeshTopology& mesh, int M, std::uint64_t seed) {
  const int nv = mesh.num_vertices();
  if (M < 2 || M > nv) throw Error("cover", concat("subdomain count M=", M, " outside [2, ", nv, "]"));
  std::mt19937_64 rng(seed);
  std::vector<int> seeds{static_cast<int>(rng() % static_cast<std::uint64_t>(nv))};
  std::vector<double> dmin(nv, kInf);
  while (static_cast<int>(seeds.size()) < M) {
    const Point& s = mesh.vertices[seeds.back()];
    int arg = -1;
    double far = -1.0;
    for (int v = 0; v < nv; ++v) {
      dmin[v] = std::min(dmin[v], distance(mesh.vertices[v], s));
      if (dmin[v] > far) {
        far = dmin[v];
        arg = v;
      }
    }
    seeds.push_back(arg);
  }
  const Adjacency nbr = vertex_neighbors(mesh);
  std::vector<int> label(nv, -1);
  std::vector<int> size(M, 0);
  std::vector<std::deque<int>> queue(M);
  int assigned = 0;
  auto claim = [&](int p, int v) {
    label[v] = p;
    ++size[p];
    ++assigned;
    for (int w : nbr[v])
      if (label[w] < 0) queue[p].push_back(w);
  };
  for (int p = 0; p < M; ++p) claim(p, seeds[p]);
  while (assigned < nv) {
    int p = -1;
    for (int q = 0; q < M; ++q)
      if (!queue[q].empty() && (p < 0 || size[q] < size[p])) p = q;
    if (p < 0) {
      // Disconnected remainder: restart growth of the smallest part from the first free vertex.
      p = static_cast<int>(std::min_element(size.begin(), size.end()) - size.begin());
      claim(p, static_cast<int>(std::find(label.begin(), label.end(), -1) - label.begin()));
      continue;
    }
    while (!queue[p].empty() && label[queue[p].front()] >= 0) queue[p].pop_front();
    if (queue[p].empty()) continue;
    const int v = queue[p].front();
    queue[p].pop_front();
    claim(p, v);
  }
  return label;
}

std::vector<std::vector<int>> sets_from_labels(std::span<const int> labels, int M) {
  std::vector<std::vector<int>> sets(M);
  for (size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0 || labels[v] >= M)
      throw Error("cover", concat("vertex ", v, " has label ", labels[v], " outside [0, ", M, ")"));
    sets[labels[v]].push_back(static_cast<int>(v));
  }
  for (int p = 0; p < M; ++p)
    if (sets[p].empty()) throw Error("cover", concat("vertex set ", p, " is empty"));
  return sets;
}

std::vector<std::vector<int>> build_subdomains(const MeshTopology& mesh,
                                               std::span<const int> owner, int M) {
  std::vector<std::vector<int>> cells(M);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    int seen[4] = {-1, -1, -1, -1};
    int k = 0;
    for (int v : mesh.cell(c)) {
      const int p = owner[v];
      if (std::find(seen, seen + k, p) == seen + k) {
        seen[k++] = p;
        cells[p].push_back(c);
      }
    }
  }
  return cells;
}

std::optional<std::pair<int, int>> find_contained_subdomain(
    const std::vector<std::vector<int>>& subdomain_cells) {
  const int M = static_cast<int>(subdomain_cells.size());
  for (int p = 0; p < M; ++p)
    for (int q = 0; q < M; ++q) {
      if (p == q || subdomain_cells[q].size() > subdomain_cells[p].size()) continue;
      if (std::includes(subdomain_cells[p].begin(), subdomain_cells[p].end(),
                        subdomain_cells[q].begin(), subdomain_cells[q].end()))
        return std::make_pair(p, q);
    }
  return std::nullopt;
}

Extension build_extension(const MeshTopology& mesh, std::span<const int> subdomain_cells,
                          double r, LayerPolicy policy) {
  if (!(r >= 0.0)) throw Error("cover", concat("extension radius must be >= 0, got ", r));
  const int nv = mesh.num_vertices();
  const Adjacency vc = vertex_cells(mesh);

  std::vector<char> in_u(nv, 0);
  for (int c : subdomain_cells)
    for (int v : mesh.cell(c)) in_u[v] = 1;
  std::vector<char> layer1(mesh.cells.size(), 0), layer2(mesh.cells.size(), 0);
  std::vector<char> in_v1(nv, 0);
  for (int v = 0; v < nv; ++v)
    if (in_u[v])
      for (int c : vc[v]) layer1[c] = 1;
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (layer1[c])
      for (int v : mesh.cell(c)) in_v1[v] = 1;
  for (int v = 0; v < nv; ++v)
    if (in_v1[v])
      for (int c : vc[v]) layer2[c] = 1;

  std::vector<Point> upts;
  for (int v = 0; v < nv; ++v)
    if (in_u[v]) upts.push_back(mesh.vertices[v]);
  const double cutoff = std::max(r, 2.0 * mesh.h);
  const GridLocator locator(std::move(upts), mesh.dim, std::max(mesh.h, cutoff / 4.0));
  std::vector<double> d(nv);
  for (int v = 0; v < nv; ++v) d[v] = in_u[v] ? 0.0 : locator.nearest(mesh.vertices[v], cutoff);

  Extension ext;
  std::vector<char> in_ball(mesh.cells.size(), 0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double dc = kInf;
    for (int v : mesh.cell(c)) dc = std::min(dc, d[v]);
    if (dc <= r) in_ball[c] = 1;
    if (layer2[c]) ext.required_radius = std::max(ext.required_radius, dc);
  }

  if (policy == LayerPolicy::strict) {
    std::vector<int> ball;
    for (int c = 0; c < mesh.num_cells(); ++c)
      if (in_ball[c]) ball.push_back(c);
    const auto bflags = boundary_of_cells(mesh, ball);
    for (int v = 0; v < nv; ++v)
      if (bflags[v] && !mesh.on_boundary[v] && in_v1[v])
        throw Error("cover", concat("extension radius ", r, " leaves trace vertex ", v,
                                    " within one edge of the subdomain; need r >= ",
                                    ext.required_radius));
  }

  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!in_ball[c] && !(policy == LayerPolicy::enforce && layer2[c])) continue;
    ext.cells.push_back(c);
    double dc = kInf;
    for (int v : mesh.cell(c)) dc = std::min(dc, d[v]);
    ext.effective_radius = std::max(ext.effective_radius, dc);
  }
  return ext;
}

std::vector<int> overlap_set(const MeshTopology& mesh, std::span<const int> owner) {
  std::vector<int> gamma;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto cell = mesh.cell(c);
    for (size_t i = 1; i < cell.size(); ++i)
      if (owner[cell[i]] != owner[cell[0]]) {
        gamma.push_back(c);
        break;
      }
  }
  return gamma;
}

Point principal_direction(std::span<const Point> points, int dim) {
  if (points.size() < 2) throw Error("cover", "principal direction needs at least two points");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : points)
    for (int i = 0; i < dim; ++i) mean[i] += x[i];
  mean /= static_cast<double>(points.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& x : points) {
    Eigen::VectorXd y(dim);
    for (int i = 0; i < dim; ++i) y[i] = x[i] - mean[i];
    C += y * y.transpose();
  }
  C /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const double top = es.eigenvalues()[dim - 1];
  if (!(top > 0.0)) throw Error("cover", "degenerate coordinate set (all points identical)");
  int tied = 0;
  for (int i = dim - 1; i >= 0 && es.eigenvalues()[i] >= top * (1.0 - 1e-9); --i) ++tied;
  Eigen::VectorXd u;
  if (tied == 1) {
    u = es.eigenvectors().col(dim - 1);
  } else {
    const Eigen::MatrixXd E = es.eigenvectors().rightCols(tied);
    std::vector<Eigen::VectorXd> proj;
    proj.reserve(points.size());
    for (const auto& x : points) {
      Eigen::VectorXd y(dim);
      for (int i = 0; i < dim; ++i) y[i] = x[i] - mean[i];
      proj.push_back(E.transpose() * y);
    }
    double best_len = -1.0;
    for (size_t i = 0; i < proj.size(); ++i)
      for (size_t j = i + 1; j < proj.size(); ++j) {
        const double len = (proj[i] - proj[j]).norm();
        if (len < best_len * (1.0 - 1e-12) || len == 0.0) continue;
        Eigen::VectorXd cand = E * (proj[i] - proj[j]) / len;
        fix_sign(cand);
        const bool longer = len > best_len * (1.0 + 1e-12);
        bool better = longer || u.size() == 0;
        if (!better) {
          const Eigen::VectorXd ca = cand.cwiseAbs(), ua = u.cwiseAbs();
          better = lex_greater(ca, ua, 1e-12) || (!lex_greater(ua, ca, 1e-12) && lex_greater(cand, u, 1e-12));
        }
        if (better) {
          u = cand;
          best_len = std::max(best_len, len);
        }
      }
  }
  fix_sign(u);
  Point out{0.0, 0.0, 0.0};
  for (int i = 0; i < dim; ++i) out[i] = u[i];
  return out;
}

double empirical_radius(const MeshTopology& mesh, std::span<const int> vertex_set) {
  std::vector<Point> pts;
  pts.reserve(vertex_set.size());
  for (int v : vertex_set) pts.push_back(mesh.vertices[v]);
  const Point u = principal_direction(pts, mesh.dim);
  double lo = kInf, hi = -kInf;
  for (const auto& x : pts) {
    const double s = u[0] * x[0] + u[1] * x[1] + u[2] * x[2];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return 0.5 * (hi - lo);
}

CoverPlan build_cover(const MeshTopology& mesh, const CoverOptions& options) {
  CoverPlan plan;
  plan.M = options.M;
  if (options.M < 2) throw Error("cover", concat("need at least 2 subdomains, got ", options.M));
  if (!options.labels.empty()) {
    if (options.labels.size() != mesh.vertices.size())
      throw Error("cover", concat("partition has ", options.labels.size(), " labels for ",
                                  mesh.num_vertices(), " vertices"));
    plan.owner = options.labels;
  } else {
    plan.owner = partition_vertices(mesh, options.M, options.seed);
  }
  plan.vertex_sets = sets_from_labels(plan.owner, plan.M);
  plan.subdomain_cells = build_subdomains(mesh, plan.owner, plan.M);
  if (auto bad = find_contained_subdomain(plan.subdomain_cells))
    throw Error("cover", concat("subdomain ", bad->second, " is contained in subdomain ", bad->first));
  plan.gamma_cells = overlap_set(mesh, plan.owner);
  for (int p = 0; p < plan.M; ++p) {
    double rc = 0.0;
    try {
      rc = empirical_radius(mesh, plan.vertex_sets[p]);
    } catch (const Error& e) {
      log::debug("subdomain ", p, ": no empirical radius (", e.what(), ")");
    }
    const double r = options.radius_factor * rc;
    Extension ext = build_extension(mesh, plan.subdomain_cells[p], r, options.policy);
    plan.empirical_radius.push_back(rc);
    plan.radius.push_back(r);
    plan.effective_radius.push_back(ext.effective_radius);
    plan.extension_cells.push_back(std::move(ext.cells));
    plan.subdomain_dofs.push_back(build_local_dofs(mesh, plan.subdomain_cells[p], mesh.on_boundary));
    plan.extension_dofs.push_back(build_local_dofs(mesh, plan.extension_cells[p], mesh.on_boundary));
  }
  return plan;
}

void validate_cover(const MeshTopology& mesh, const CoverPlan& plan) {
  const int nv = mesh.num_vertices();
  if (plan.M < 2 || static_cast<int>(plan.vertex_sets.size()) != plan.M)
    throw Error("cover", "inconsistent subdomain count");
  std::vector<int> seen(nv, -1);
  for (int p = 0; p < plan.M; ++p) {
    if (plan.vertex_sets[p].empty()) throw Error("cover", concat("vertex set ", p, " is empty"));
    for (int v : plan.vertex_sets[p]) {
      if (seen[v] >= 0) throw Error("cover", concat("vertex ", v, " in sets ", seen[v], " and ", p));
      seen[v] = p;
    }
  }
  for (int v = 0; v < nv; ++v)
    if (seen[v] < 0) throw Error("cover", concat("vertex ", v, " is not covered"));
  std::vector<char> covered(mesh.cells.size(), 0);
  for (int p = 0; p < plan.M; ++p) {
    const auto& U = plan.subdomain_cells[p];
    const auto& X = plan.extension_cells[p];
    for (int c : U) covered[c] = 1;
    if (!std::includes(X.begin(), X.end(), U.begin(), U.end()))
      throw Error("cover", concat("subdomain ", p, " is not contained in its extension"));
    std::vector<char> in_u(nv, 0);
    for (int c : U)
      for (int v : mesh.cell(c)) in_u[v] = 1;
    const auto bflags = boundary_of_cells(mesh, X);
    for (int v = 0; v < nv; ++v)
      if (bflags[v] && !mesh.on_boundary[v] && in_u[v])
        throw Error("cover", concat("trace vertex ", v, " of extension ", p, " touches subdomain ", p));
    for (const LocalDofMap* map : {&plan.subdomain_dofs[p], &plan.extension_dofs[p]}) {
      if (!std::is_sorted(map->vertices.begin(), map->vertices.begin() + map->n_B) ||
          !std::is_sorted(map->vertices.begin() + map->n_B, map->vertices.end()))
        throw Error("cover", concat("local ordering of subdomain ", p, " is not boundary-first"));
    }
  }
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (!covered[c]) throw Error("cover", concat("cell ", c, " is not covered by any subdomain"));
  if (auto bad = find_contained_subdomain(plan.subdomain_cells))
    throw Error("cover", concat("subdomain ", bad->second, " is contained in subdomain ", bad->first));
  if (plan.gamma_cells != overlap_set(mesh, plan.owner))
    throw Error("cover", "overlap set does not match vertex ownership");
}

void counting_functions(const MeshTopology& mesh, const CoverPlan& plan, std::vector<int>& G,
                        std::vector<int>& G_hat) {
  G.assign(mesh.cells.size(), 0);
  G_hat.assign(mesh.cells.size(), 0);
  for (int p = 0; p < plan.M; ++p) {
    for (int c : plan.subdomain_cells[p]) ++G[c];
    for (int c : plan.extension_cells[p]) ++G_hat[c];
  }
}

}  // namespace pucpi
