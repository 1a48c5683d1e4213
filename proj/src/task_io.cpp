#include "pucpi/task_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pucpi/common.hpp"

namespace pucpi {

namespace {

void write_ints(std::ostream& os, const char* key, const std::vector<int>& xs) {
  os << key << ' ' << xs.size();
  for (int x : xs) os << ' ' << x;
  os << '\n';
}

void write_doubles(std::ostream& os, const char* key, const std::vector<double>& xs) {
  os << key << ' ' << xs.size();
  for (double x : xs) os << ' ' << format_exact(x);
  os << '\n';
}

class Reader {
 public:
  Reader(std::istream& is, const char* what) : is_(is), what_(what) {}

  void expect(const std::string& key) {
    std::string got;
    if (!(is_ >> got) || got != key)
      fail(concat("expected '", key, "', found '", got, "'"));
  }
  template <typename T>
  T value() {
    T x{};
    if (!(is_ >> x)) fail("truncated value");
    return x;
  }
  template <typename T>
  T field(const std::string& key) {
    expect(key);
    return value<T>();
  }
  std::vector<int> ints(const std::string& key) {
    const long n = field<long>(key);
    if (n < 0) fail(concat("negative length for ", key));
    std::vector<int> xs(n);
    for (auto& x : xs) x = value<int>();
    return xs;
  }
  std::vector<double> doubles(const std::string& key) {
    const long n = field<long>(key);
    if (n < 0) fail(concat("negative length for ", key));
    std::vector<double> xs(n);
    for (auto& x : xs) x = value<double>();
    return xs;
  }
  void rest_of_line() {
    std::string line;
    std::getline(is_, line);
  }
  [[noreturn]] void fail(const std::string& msg) const { throw Error("runtime", concat("malformed ", what_, ": ", msg)); }

 private:
  std::istream& is_;
  const char* what_;
};

void check_range(const std::vector<int>& xs, int n, const char* key) {
  for (int x : xs)
    if (x < 0 || x >= n) throw Error("runtime", concat("malformed task: ", key, " index ", x, " out of range"));
}

}  // namespace

void write_task(std::ostream& os, const LocalTask& t) {
  os << "pucpi-task v1\n";
  os << "subdomain " << t.subdomain << '\n';
  os << "seed " << t.seed << '\n';
  os << "lambda " << format_exact(t.config.Lambda) << '\n';
  os << "eta " << format_exact(t.config.eta) << '\n';
  os << "N " << t.config.N << '\n';
  os << "tol " << format_exact(t.config.tol) << '\n';
  os << "radius_factor " << format_exact(t.config.radius_factor) << '\n';
  write_ints(os, "vertex_map", t.vertex_map);
  write_ints(os, "cell_map", t.cell_map);
  write_ints(os, "subdomain_cells", t.subdomain_cells);
  write_ints(os, "owned", t.owned_vertices);
  write_ints(os, "dirichlet", t.dirichlet_vertices);
  write_ints(os, "gamma_vertices", t.gamma_vertices);
  write_ints(os, "gamma_cells", t.gamma_cells);
  write_mesh(os, t.mesh);
  os << "end\n";
}

LocalTask read_task(std::istream& is) {
  Reader r(is, "task file");
  r.expect("pucpi-task");
  r.expect("v1");
  LocalTask t;
  t.subdomain = r.field<int>("subdomain");
  t.seed = r.field<std::uint64_t>("seed");
  t.config.Lambda = r.field<double>("lambda");
  t.config.eta = r.field<double>("eta");
  t.config.N = r.field<int>("N");
  t.config.tol = r.field<double>("tol");
  t.config.radius_factor = r.field<double>("radius_factor");
  t.vertex_map = r.ints("vertex_map");
  t.cell_map = r.ints("cell_map");
  t.subdomain_cells = r.ints("subdomain_cells");
  t.owned_vertices = r.ints("owned");
  t.dirichlet_vertices = r.ints("dirichlet");
  t.gamma_vertices = r.ints("gamma_vertices");
  t.gamma_cells = r.ints("gamma_cells");
  r.rest_of_line();
  t.mesh = read_mesh(is);
  r.expect("end");
  const int nv = t.mesh.num_vertices(), nc = t.mesh.num_cells();
  if (static_cast<int>(t.vertex_map.size()) != nv || static_cast<int>(t.cell_map.size()) != nc)
    r.fail("index maps do not match the submesh");
  check_range(t.subdomain_cells, nc, "subdomain_cells");
  check_range(t.gamma_cells, nc, "gamma_cells");
  check_range(t.owned_vertices, nv, "owned");
  check_range(t.dirichlet_vertices, nv, "dirichlet");
  check_range(t.gamma_vertices, nv, "gamma_vertices");
  return t;
}

void write_result(std::ostream& os, const LocalBasisResult& res) {
  os << "pucpi-local v1\n";
  os << "subdomain " << res.subdomain << '\n';
  os << "n " << res.n << '\n';
  os << "K " << res.K_modes << '\n';
  os << "k " << res.k_complement << '\n';
  os << "sigma_tail " << format_exact(res.sigma_tail) << '\n';
  write_doubles(os, "d", res.d);
  write_doubles(os, "sigma", res.sigma);
  os << "gamma_vertices " << res.gamma_vertices.size() << '\n';
  for (size_t g = 0; g < res.gamma_vertices.size(); ++g) {
    os << res.gamma_vertices[g];
    for (int j = 0; j < res.n; ++j) os << ' ' << format_exact(res.gamma_values(g, j));
    os << '\n';
  }
  os << "gamma_cells " << res.gamma_cells.size() << '\n';
  for (size_t c = 0; c < res.gamma_cells.size(); ++c)
    os << res.gamma_cells[c] << ' ' << format_exact(res.gamma_cell_volumes[c]) << '\n';
  os << "info " << res.info.size() << '\n';
  for (const auto& [key, value] : res.info) os << key << ' ' << format_exact(value) << '\n';
  os << "end\n";
}

LocalBasisResult read_result(std::istream& is) {
  Reader r(is, "result file");
  r.expect("pucpi-local");
  r.expect("v1");
  LocalBasisResult res;
  res.subdomain = r.field<int>("subdomain");
  res.n = r.field<int>("n");
  res.K_modes = r.field<int>("K");
  res.k_complement = r.field<int>("k");
  res.sigma_tail = r.field<double>("sigma_tail");
  res.d = r.doubles("d");
  res.sigma = r.doubles("sigma");
  if (res.n < 0 || static_cast<int>(res.d.size()) != res.n) r.fail("diagonal length differs from n");
  const long ng = r.field<long>("gamma_vertices");
  if (ng < 0) r.fail("negative overlap vertex count");
  res.gamma_vertices.resize(ng);
  res.gamma_values.resize(ng, res.n);
  for (long g = 0; g < ng; ++g) {
    res.gamma_vertices[g] = r.value<int>();
    for (int j = 0; j < res.n; ++j) res.gamma_values(g, j) = r.value<double>();
  }
  const long nc = r.field<long>("gamma_cells");
  if (nc < 0) r.fail("negative overlap cell count");
  for (long c = 0; c < nc; ++c) {
    res.gamma_cells.push_back(r.value<int>());
    res.gamma_cell_volumes.push_back(r.value<double>());
  }
  const long ni = r.field<long>("info");
  for (long i = 0; i < ni; ++i) {
    const auto key = r.value<std::string>();
    res.info[key] = r.value<double>();
  }
  r.expect("end");
  return res;
}

std::string task_to_string(const LocalTask& task) {
  std::ostringstream os;
  write_task(os, task);
  return os.str();
}

std::string result_to_string(const LocalBasisResult& result) {
  std::ostringstream os;
  write_result(os, result);
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("runtime", concat("cannot open ", path.string()));
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + concat(".tmp.", ::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("runtime", concat("cannot write ", tmp));
  size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (w <= 0) {
      ::close(fd);
      throw Error("runtime", concat("write failed for ", tmp));
    }
    off += static_cast<size_t>(w);
  }
  ::fsync(fd);
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("runtime", concat("cannot rename ", tmp, " to ", path.string()));
}

}  // namespace pucpi
