#include "pucpi/local_subspace.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "pucpi/common.hpp"
#include "pucpi/interpolation.hpp"

namespace pucpi {

namespace {

std::vector<char> flags_from(const std::vector<int>& ids, int n) {
  std::vector<char> f(n, 0);
  for (int v : ids) f[v] = 1;
  return f;
}

SpMat selection(const std::vector<int>& rows, int n) {
  SpMat S(n, static_cast<int>(rows.size()));
  std::vector<Eigen::Triplet<double>> t;
  for (size_t j = 0; j < rows.size(); ++j) t.emplace_back(rows[j], static_cast<int>(j), 1.0);
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

/// Q W with W = (Q^T M Q)^{-1/2} restricted to eigenvalues above drop * max.
Mat m_orthonormalize(const Mat& Q, const SpMat& M0, double drop, int& dropped) {
  Mat G = Q.transpose() * (M0 * Q);
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const Vec& ev = es.eigenvalues();
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > drop * top && ev[i] > 0) keep.push_back(static_cast<int>(i));
  dropped = static_cast<int>(ev.size() - keep.size());
  Mat W(Q.cols(), keep.size());
  for (size_t j = 0; j < keep.size(); ++j)
    W.col(j) = es.eigenvectors().col(keep[j]) / std::sqrt(ev[keep[j]]);
  return Q * W;
}

}  // namespace

std::vector<double> SpectralConfig::nodes() const { return chebyshev_nodes(N, Lambda); }

void SpectralConfig::validate() const {
  if (!(Lambda > 0)) throw Error("config", concat("Lambda must be positive, got ", Lambda));
  if (!(eta > 1.0))
    throw Error("config", concat("oversampling parameter eta must satisfy eta > 1, got ", eta));
  if (N < 1) throw Error("config", concat("interpolation point count must be >= 1, got ", N));
  if (!(tol > 0)) throw Error("config", concat("tol must be positive, got ", tol));
  if (!(radius_factor >= 0)) throw Error("config", concat("radius factor must be >= 0, got ", radius_factor));
  if (eta <= 1.25)
    log::warn("eta = ", eta, " <= 5/4: the interpolation error bound does not decay with N");
}

LocalTask make_local_task(const MeshTopology& mesh, const CoverPlan& plan, int p,
                          const SpectralConfig& config, std::uint64_t seed) {
  LocalTask task;
  task.subdomain = p;
  task.config = config;
  task.seed = seed;
  const auto& cells = plan.extension_cells[p];
  task.mesh = extract_submesh(mesh, cells, task.vertex_map);
  task.cell_map = cells;
  for (int c : plan.subdomain_cells[p])
    task.subdomain_cells.push_back(
        static_cast<int>(std::lower_bound(cells.begin(), cells.end(), c) - cells.begin()));
  const int nl = task.mesh.num_vertices();
  for (int v = 0; v < nl; ++v) {
    const int g = task.vertex_map[v];
    if (plan.owner[g] == p) task.owned_vertices.push_back(v);
    if (mesh.on_boundary[g]) task.dirichlet_vertices.push_back(v);
  }
  std::vector<char> gv(nl, 0);
  for (int gc : plan.gamma_cells) {
    auto it = std::lower_bound(cells.begin(), cells.end(), gc);
    if (it == cells.end() || *it != gc) continue;
    const int lc = static_cast<int>(it - cells.begin());
    bool touches = false;
    for (int v : task.mesh.cell(lc))
      if (plan.owner[task.vertex_map[v]] == p) touches = true;
    if (!touches) continue;
    task.gamma_cells.push_back(lc);
    for (int v : task.mesh.cell(lc))
      if (plan.owner[task.vertex_map[v]] == p && !mesh.on_boundary[task.vertex_map[v]]) gv[v] = 1;
  }
  for (int v = 0; v < nl; ++v)
    if (gv[v]) task.gamma_vertices.push_back(v);
  return task;
}

LocalSubspace::LocalSubspace(const LocalTask& task) : task_(task) {
  const MeshTopology& mesh = task_.mesh;
  const int nv = mesh.num_vertices();
  const std::vector<char> dirichlet = flags_from(task_.dirichlet_vertices, nv);
  std::vector<int> all(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) all[c] = c;

  Stopwatch sw;
  ext_ = build_local_dofs(mesh, all, dirichlet);
  const int nB = ext_.n_B, nI = ext_.n_I;
  if (nI < 1) throw Error("local", concat("subdomain ", task_.subdomain, " has no interior DOFs"));
  auto am = assemble_local(mesh, all, ext_);
  A_ = std::move(am.A);
  M_ = std::move(am.M);
  K_ = A_ + M_;
  AII_ = block(A_, nB, nI, nB, nI);
  MII_ = block(M_, nB, nI, nB, nI);
  AIB_ = block(A_, nB, nI, 0, nB);
  MIB_ = block(M_, nB, nI, 0, nB);
  KBB_ = block(K_, 0, nB, 0, nB);

  sub_ = build_local_dofs(mesh, task_.subdomain_cells, dirichlet);
  const auto ext_idx = ext_.index_of_vertex(nv);
  fu_index_.resize(sub_.size());
  for (int i = 0; i < sub_.size(); ++i) {
    const int e = ext_idx[sub_.vertices[i]];
    if (e < nB)
      throw Error("local", concat("vertex ", task_.vertex_map[sub_.vertices[i]], " of subdomain ",
                                  task_.subdomain, " lies on the extension trace"));
    fu_index_[i] = e - nB;
  }
  const std::vector<char> owned_v = flags_from(task_.owned_vertices, nv);
  owned_.resize(sub_.size());
  for (int i = 0; i < sub_.size(); ++i) owned_[i] = owned_v[sub_.vertices[i]];
  auto au = assemble_local(mesh, task_.subdomain_cells, sub_);
  AU_ = std::move(au.A);
  MU_ = std::move(au.M);
  SpMat Ao = AU_;
  Ao.prune([&](int i, int j, double) { return owned_[i] && owned_[j]; });
  KR_ = Ao + MU_;
  timings_["assemble"] = sw.seconds();

  sw.reset();
  SmallestOptions so;
  so.threshold = task_.config.Lambda_tilde();
  so.seed = task_.seed;
  so.perturbation = 1e-8 * task_.config.Lambda;
  modes_ = smallest_eigenpairs(AII_, MII_, so);
  MV_ = MII_ * modes_.vectors;
  timings_["local_modes"] = sw.seconds();

  sw.reset();
  nodes_ = task_.config.nodes();
  for (double xi : nodes_)
    node_factors_.push_back(factor_shifted(AII_, MII_, xi, 1e-8 * task_.config.Lambda));
  if (nB > 0) k_factor_.compute(K_);
  kr_factor_.compute(KR_);
  timings_["factorize"] = sw.seconds();
}

Vec LocalSubspace::apply_P(const Vec& xI) const {
  if (modes_.size() == 0) return xI;
  return xI - modes_.vectors * (MV_.transpose() * xI);
}

Vec LocalSubspace::apply_Pt(const Vec& xI) const {
  if (modes_.size() == 0) return xI;
  return xI - MV_ * (modes_.vectors.transpose() * xI);
}

Vec LocalSubspace::apply_Zh_node(int i, const Vec& wB) const {
  const double t = node_factors_[i].shift;
  const Vec rhs = apply_Pt(Vec(-(AIB_ * wB) + t * (MIB_ * wB)));
  return apply_P(node_factors_[i].factor.solve(rhs));
}

Vec LocalSubspace::apply_ZhT_node(int i, const Vec& xI) const {
  const double t = node_factors_[i].shift;
  const Vec s = apply_P(node_factors_[i].factor.solve(apply_Pt(xI)));
  return -(AIB_.transpose() * s) + t * (MIB_.transpose() * s);
}

Vec LocalSubspace::apply_Zh(double t, const Vec& wB) const {
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i] == t) return apply_Zh_node(static_cast<int>(i), wB);
  const ShiftedFactor sf = factor_shifted(AII_, MII_, t, 1e-8 * task_.config.Lambda);
  const Vec rhs = apply_Pt(Vec(-(AIB_ * wB) + sf.shift * (MIB_ * wB)));
  return apply_P(sf.factor.solve(rhs));
}

Mat LocalSubspace::apply_Zh(double t, const Mat& WB) const {
  Mat out(n_I(), WB.cols());
  for (Eigen::Index j = 0; j < WB.cols(); ++j) out.col(j) = apply_Zh(t, Vec(WB.col(j)));
  return out;
}

Vec LocalSubspace::apply_Sinv(const Vec& xB) const {
  Vec rhs = Vec::Zero(n_B() + n_I());
  rhs.head(n_B()) = xB;
  return k_factor_.solve(rhs).head(n_B());
}

Vec LocalSubspace::restrict_to_U(const Vec& xI) const {
  Vec y(n_U());
  for (int i = 0; i < n_U(); ++i) y[i] = xI[fu_index_[i]];
  return y;
}

Vec LocalSubspace::extend_from_U(const Vec& xU) const {
  Vec y = Vec::Zero(n_I());
  for (int i = 0; i < n_U(); ++i) y[fu_index_[i]] += xU[i];
  return y;
}

Vec LocalSubspace::apply_cct(const Vec& x) const {
  if (n_B() == 0) return Vec::Zero(n_U());
  const Vec g = extend_from_U(kr_factor_.apply_F(x));
  Vec acc = Vec::Zero(n_U());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Vec h = apply_ZhT_node(static_cast<int>(i), g);
    const Vec s = apply_Sinv(h);
    acc += restrict_to_U(apply_Zh_node(static_cast<int>(i), s));
  }
  return kr_factor_.apply_Ft(acc);
}

LinearOp LocalSubspace::cct_operator() const {
  return [this](const Vec& x, Vec& y) { y = apply_cct(x); };
}

Truncation LocalSubspace::truncate(double tol) const {
  Truncation tr;
  tr.C.resize(n_U(), 0);
  if (n_B() == 0 || n_U() == 0) return tr;
  DominantOptions opt;
  opt.threshold = tol * tol;
  opt.seed = task_.seed;
  const DominantResult dr = dominant_pairs_of_operator(cct_operator(), n_U(), opt);
  tr.k = static_cast<int>(dr.values.size());
  for (double th : dr.values) tr.sigma.push_back(std::sqrt(std::max(th, 0.0)));
  tr.tail = std::sqrt(std::max(dr.tail, 0.0));
  tr.C = dr.vectors;
  if (tr.k >= n_U()) log::warn("subdomain ", task_.subdomain, ": tol below numerical floor, k capped at n");
  return tr;
}

std::vector<double> LocalSubspace::singular_values(int count) const {
  std::vector<double> s;
  if (n_B() == 0 || n_U() == 0) return s;
  DominantOptions opt;
  opt.count = std::min(count, n_U());
  opt.seed = task_.seed;
  const DominantResult dr = dominant_pairs_of_operator(cct_operator(), n_U(), opt);
  for (double th : dr.values) s.push_back(std::sqrt(std::max(th, 0.0)));
  return s;
}

Mat build_local_basis(const Mat& Q, const SpMat& A0, const SpMat& M0, std::vector<double>& d,
                      double drop) {
  d.clear();
  std::vector<int> nonzero;
  const Mat MQ = M0 * Q;
  Vec scale(Q.cols());
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    const double nrm = std::sqrt(std::max(Q.col(j).dot(MQ.col(j)), 0.0));
    scale[j] = nrm;
    if (nrm > 0) nonzero.push_back(static_cast<int>(j));
  }
  Mat Qn(Q.rows(), nonzero.size());
  for (size_t j = 0; j < nonzero.size(); ++j) Qn.col(j) = Q.col(nonzero[j]) / scale[nonzero[j]];
  if (Qn.cols() == 0) return Qn;
  int dropped = 0, dropped2 = 0;
  Mat Q1 = m_orthonormalize(Qn, M0, drop, dropped);
  // Second pass restores orthonormality lost to the conditioning of the first Gram matrix.
  Q1 = m_orthonormalize(Q1, M0, 0.0, dropped2);
  Mat H = Q1.transpose() * (A0 * Q1);
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  d.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  return Q1 * es.eigenvectors();
}

LocalBasisResult LocalSubspace::build(const Truncation& trunc, bool keep_basis) const {
  Stopwatch sw;
  LocalBasisResult res;
  res.subdomain = task_.subdomain;
  res.K_modes = modes_.size();
  res.k_complement = trunc.k;
  res.sigma = trunc.sigma;
  res.sigma_tail = trunc.tail;

  Mat Q(n_U(), res.K_modes + trunc.k);
  for (int j = 0; j < res.K_modes; ++j) Q.col(j) = restrict_to_U(Vec(modes_.vectors.col(j)));
  if (trunc.k > 0) Q.rightCols(trunc.k) = kr_factor_.solve_Ft(trunc.C);

  std::vector<int> own;
  std::vector<int> row_of(n_U(), -1);
  for (int i = 0; i < n_U(); ++i)
    if (owned_[i]) {
      row_of[i] = static_cast<int>(own.size());
      own.push_back(i);
    }
  const SpMat S = selection(own, n_U());
  const SpMat A0 = S.transpose() * AU_ * S;
  const SpMat M0 = S.transpose() * MU_ * S;
  Mat Qo(own.size(), Q.cols());
  for (size_t r = 0; r < own.size(); ++r) Qo.row(r) = Q.row(own[r]);
  const Mat Qt = build_local_basis(Qo, A0, M0, res.d);
  res.n = static_cast<int>(Qt.cols());
  if (keep_basis) {
    res.basis = Qt;
    for (int i : own) res.basis_vertices.push_back(task_.vertex_map[sub_.vertices[i]]);
  }

  const auto sub_idx = sub_.index_of_vertex(task_.mesh.num_vertices());
  res.gamma_values.resize(task_.gamma_vertices.size(), res.n);
  for (size_t g = 0; g < task_.gamma_vertices.size(); ++g) {
    const int v = task_.gamma_vertices[g];
    const int r = sub_idx[v] >= 0 ? row_of[sub_idx[v]] : -1;
    if (r < 0) throw Error("local", concat("overlap vertex ", task_.vertex_map[v], " is not owned by subdomain ", task_.subdomain));
    res.gamma_vertices.push_back(task_.vertex_map[v]);
    res.gamma_values.row(g) = Qt.row(r);
  }
  for (int c : task_.gamma_cells) {
    res.gamma_cells.push_back(task_.cell_map[c]);
    res.gamma_cell_volumes.push_back(std::abs(signed_cell_volume(task_.mesh, c)));
  }
  res.timings = timings_;
  res.timings["basis"] = sw.seconds();
  res.info["n_ext"] = ext_.size();
  res.info["n_ext_B"] = ext_.n_B;
  res.info["n_ext_I"] = ext_.n_I;
  res.info["n_U"] = n_U();
  res.info["n_owned"] = static_cast<double>(own.size());
  res.info["rank_dropped"] = static_cast<double>(Q.cols() - res.n);
  int perturbed = 0;
  for (const auto& f : node_factors_) perturbed += f.perturbations;
  res.info["shift_perturbations"] = perturbed;
  return res;
}

InterpProbe LocalSubspace::interp_error_probe(const std::vector<double>& t_grid, const Mat& WB) const {
  InterpProbe pr;
  const auto& cfg = task_.config;
  const int nw = static_cast<int>(WB.cols());
  std::vector<Mat> at_nodes(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    at_nodes[i].resize(n_I(), nw);
    for (int j = 0; j < nw; ++j) at_nodes[i].col(j) = apply_Zh_node(static_cast<int>(i), Vec(WB.col(j)));
  }
  std::vector<double> ts = t_grid;
  const size_t grid_count = ts.size();
  ts.insert(ts.end(), nodes_.begin(), nodes_.end());
  for (size_t q = 0; q < ts.size(); ++q) {
    const double t = ts[q];
    const bool at_node = q >= grid_count;
    const auto l = lagrange_eval(nodes_, t);
    const Mat Z = apply_Zh(t, WB);
    for (int j = 0; j < nw; ++j) {
      Vec interp = Vec::Zero(n_I());
      for (size_t i = 0; i < nodes_.size(); ++i) interp += l[i] * at_nodes[i].col(j);
      const Vec diff = interp - Z.col(j);
      const double e0 = std::sqrt(std::max(diff.dot(MII_ * diff), 0.0));
      const double e1 = std::sqrt(std::max(diff.dot(AII_ * diff), 0.0));
      const Vec w = WB.col(j);
      const double ext = std::sqrt(std::max(w.dot(KBB_ * w), 0.0));
      const double zn = std::sqrt(std::max(Vec(Z.col(j)).dot(AII_ * Z.col(j)), 0.0));
      const double rel = zn > 0 ? e1 / zn : 0.0;
      if (at_node) {
        pr.max_at_nodes = std::max(pr.max_at_nodes, rel);
        continue;
      }
      const double b0 = interp_error_bound(0, cfg.eta, cfg.N, cfg.Lambda, ext);
      const double b1 = interp_error_bound(1, cfg.eta, cfg.N, cfg.Lambda, ext);
      pr.max_e0 = std::max(pr.max_e0, e0);
      pr.max_e1 = std::max(pr.max_e1, e1);
      if (b0 > 0) pr.max_ratio0 = std::max(pr.max_ratio0, e0 / b0);
      if (b1 > 0) pr.max_ratio1 = std::max(pr.max_ratio1, e1 / b1);
      pr.max_relative = std::max(pr.max_relative, rel);
      ++pr.probes;
    }
  }
  return pr;
}

LocalBasisResult compute_local_basis(const LocalTask& task) {
  Stopwatch sw;
  const LocalSubspace ls(task);
  Stopwatch st;
  const Truncation tr = ls.truncate(task.config.tol);
  const double t_trunc = st.seconds();
  LocalBasisResult res = ls.build(tr);
  res.timings["truncate"] = t_trunc;
  res.timings["total"] = sw.seconds();
  return res;
}

}  // namespace pucpi
