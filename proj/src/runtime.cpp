#include "pucpi/runtime.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "pucpi/common.hpp"
#include "pucpi/fem.hpp"
#include "pucpi/task_io.hpp"

namespace fs = std::filesystem;

namespace pucpi {

namespace {

std::string digest_of(const std::string& bytes) { return to_hex(fnv1a64(bytes)); }

std::string digest_of_file(const fs::path& path) { return digest_of(read_file(path)); }

fs::path queue_path(int p, const char* ext) { return fs::path("queue") / concat("task_", p, ".", ext); }

std::string hostname() {
  char buf[256] = {0};
  if (::gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

/// key value lines.
std::map<std::string, std::string> read_marker(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream is(path);
  std::string k, v;
  while (is >> k >> v) kv[k] = v;
  return kv;
}

int env_workers(int fallback) {
  const char* s = std::getenv("PUCPI_WORKERS");
  if (!s || !*s) return fallback;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (*end != '\0' || v < 1) throw Error("runtime", concat("PUCPI_WORKERS must be a positive integer, got '", s, "'"));
  return static_cast<int>(v);
}

fs::path resolve_executable(const ExecuteOptions& o) {
  if (!o.worker_executable.empty()) return o.worker_executable;
  return fs::read_symlink("/proc/self/exe");
}

pid_t spawn(const std::vector<std::string>& args, const fs::path& log) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) throw Error("runtime", "fork failed");
  if (pid == 0) {
    const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  return pid;
}

/// Non-blocking reap; returns true when `pid` has exited and sets `ok` to its success.
bool reaped(pid_t pid, bool& ok) {
  int status = 0;
  const pid_t r = ::waitpid(pid, &status, WNOHANG);
  if (r == 0) return false;
  ok = r == pid && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return true;
}

void sleep_for(double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }

bool terminal(const TaskEntry& t, int max_attempts) {
  return t.status == TaskStatus::done || (t.status == TaskStatus::failed && t.attempts >= max_attempts);
}

void execute_inproc(TaskManifest& m, const ExecuteOptions& o, int workers) {
  const int max_attempts = 1 + o.retries;
  for (;;) {
    std::vector<int> todo;
    for (size_t i = 0; i < m.tasks.size(); ++i)
      if (m.tasks[i].status != TaskStatus::done && m.tasks[i].attempts < max_attempts) todo.push_back(static_cast<int>(i));
    if (todo.empty()) return;
    for (int i : todo) {
      m.tasks[i].status = TaskStatus::running;
      ++m.tasks[i].attempts;
    }
    write_manifest(m);
    std::vector<std::string> digest(todo.size()), error(todo.size());
    std::atomic<size_t> next{0};
    auto body = [&] {
      for (size_t j; (j = next++) < todo.size();) {
        const TaskEntry& t = m.tasks[todo[j]];
        try {
          digest[j] = run_task_file(m.path(t.input), m.path(task_output_path(t.subdomain).string()), t.input_digest);
        } catch (const std::exception& e) {
          error[j] = e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    const int nt = std::min<int>(workers, static_cast<int>(todo.size()));
    for (int w = 0; w < nt; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    for (size_t j = 0; j < todo.size(); ++j) {
      TaskEntry& t = m.tasks[todo[j]];
      if (error[j].empty()) {
        t.status = TaskStatus::done;
        t.output_digest = digest[j];
      } else {
        t.status = TaskStatus::failed;
        log::warn("subdomain ", t.subdomain, " attempt ", t.attempts, " failed: ", error[j]);
      }
    }
    write_manifest(m);
  }
}

void execute_pool(TaskManifest& m, const ExecuteOptions& o, int workers) {
  const int max_attempts = 1 + o.retries;
  const fs::path exe = resolve_executable(o);
  std::vector<int> queue;
  for (size_t i = 0; i < m.tasks.size(); ++i)
    if (m.tasks[i].status != TaskStatus::done && m.tasks[i].attempts < max_attempts) queue.push_back(static_cast<int>(i));
  std::map<pid_t, int> running;
  size_t head = 0;
  while (head < queue.size() || !running.empty()) {
    while (head < queue.size() && static_cast<int>(running.size()) < workers) {
      TaskEntry& t = m.tasks[queue[head++]];
      ++t.attempts;
      t.status = TaskStatus::running;
      write_manifest(m);
      const auto out = m.path(task_output_path(t.subdomain).string());
      const auto log = m.path(concat("logs/task_", t.subdomain, ".a", t.attempts, ".log"));
      const pid_t pid = spawn({exe.string(), "run-task", "--input", m.path(t.input).string(), "--output",
                               out.string(), "--digest", t.input_digest},
                              log);
      running[pid] = static_cast<int>(&t - m.tasks.data());
    }
    bool changed = false;
    for (auto it = running.begin(); it != running.end();) {
      bool ok = false;
      if (!reaped(it->first, ok)) {
        ++it;
        continue;
      }
      TaskEntry& t = m.tasks[it->second];
      const auto out = m.path(task_output_path(t.subdomain).string());
      if (ok && fs::exists(out)) {
        t.status = TaskStatus::done;
        t.output_digest = digest_of_file(out);
      } else {
        t.status = TaskStatus::failed;
        log::warn("subdomain ", t.subdomain, " attempt ", t.attempts, " failed (worker exit); see logs/");
        if (t.attempts < max_attempts) queue.push_back(it->second);
      }
      changed = true;
      it = running.erase(it);
    }
    if (changed) write_manifest(m);
    else sleep_for(o.poll_seconds);
  }
}

void dispatch(TaskManifest& m, TaskEntry& t) {
  ++t.attempts;
  t.status = TaskStatus::running;
  fs::remove(m.path(queue_path(t.subdomain, "failed").string()));
  fs::remove(m.path(queue_path(t.subdomain, "done").string()));
  write_file_atomic(m.path(queue_path(t.subdomain, "ready").string()),
                    concat("input ", t.input_digest, "\nattempt ", t.attempts, "\n"));
}

void execute_dirqueue(TaskManifest& m, const ExecuteOptions& o, int workers) {
  const int max_attempts = 1 + o.retries;
  const fs::path exe = resolve_executable(o);
  const std::string host = hostname();
  std::map<int, std::chrono::steady_clock::time_point> anonymous_since;

  auto fail_or_retry = [&](TaskEntry& t, const std::string& why) {
    log::warn("subdomain ", t.subdomain, " attempt ", t.attempts, " failed: ", why);
    t.status = TaskStatus::failed;
    if (t.attempts < max_attempts) dispatch(m, t);
  };

  for (auto& t : m.tasks) {
    if (t.status == TaskStatus::done) continue;
    const bool queued = fs::exists(m.path(queue_path(t.subdomain, "ready").string())) ||
                        fs::exists(m.path(queue_path(t.subdomain, "claim").string())) ||
                        fs::exists(m.path(queue_path(t.subdomain, "done").string()));
    if (queued) t.status = TaskStatus::running;
    else if (t.attempts < max_attempts) dispatch(m, t);
    else t.status = TaskStatus::failed;
  }
  write_manifest(m);

  std::vector<pid_t> children;
  int spawned = 0;
  for (;;) {
    for (auto it = children.begin(); it != children.end();) {
      bool ok = false;
      if (reaped(*it, ok)) it = children.erase(it);
      else ++it;
    }
    bool changed = false;
    int ready = 0;
    for (auto& t : m.tasks) {
      if (terminal(t, max_attempts)) continue;
      const auto done = m.path(queue_path(t.subdomain, "done").string());
      const auto failed = m.path(queue_path(t.subdomain, "failed").string());
      const auto claim = m.path(queue_path(t.subdomain, "claim").string());
      const auto readyf = m.path(queue_path(t.subdomain, "ready").string());
      if (fs::exists(done)) {
        const auto kv = read_marker(done);
        const auto out = m.path(task_output_path(t.subdomain).string());
        const std::string got = fs::exists(out) ? digest_of_file(out) : "";
        auto att = kv.find("attempt");
        if (att != kv.end() && att->second != std::to_string(t.attempts))
          log::info("subdomain ", t.subdomain, ": accepting output of attempt ", att->second,
                    " (manifest attempt ", t.attempts, ")");
        if (kv.count("output") && kv.at("output") == got) {
          t.status = TaskStatus::done;
          t.output_digest = got;
          fs::remove(readyf);
        } else {
          fail_or_retry(t, "output digest does not match the done marker");
        }
        changed = true;
      } else if (fs::exists(failed)) {
        std::string why = read_file(failed);
        while (!why.empty() && why.back() == '\n') why.pop_back();
        fs::remove(failed);
        fail_or_retry(t, why);
        changed = true;
      } else if (fs::exists(claim)) {
        const auto kv = read_marker(claim);
        bool stale = false;
        std::error_code ec;
        const auto mtime = fs::last_write_time(claim, ec);
        const double age = ec ? 0.0
                              : std::chrono::duration<double>(fs::file_time_type::clock::now() - mtime).count();
        if (kv.count("pid")) {
          anonymous_since.erase(t.subdomain);
          const pid_t pid = static_cast<pid_t>(std::stol(kv.at("pid")));
          if (kv.count("host") && kv.at("host") == host && ::kill(pid, 0) == -1 && errno == ESRCH) stale = true;
          if (age > o.stale_seconds) stale = true;
        } else {
          const auto now = std::chrono::steady_clock::now();
          auto [it, fresh] = anonymous_since.emplace(t.subdomain, now);
          if (!fresh && std::chrono::duration<double>(now - it->second).count() > o.stale_seconds) stale = true;
        }
        if (stale) {
          fs::remove(claim, ec);
          anonymous_since.erase(t.subdomain);
          fail_or_retry(t, "worker holding the claim is gone");
          changed = true;
        }
      } else if (fs::exists(readyf)) {
        ++ready;
      } else {
        fail_or_retry(t, "task vanished from the queue");
        changed = true;
      }
    }
    if (changed) write_manifest(m);
    bool all = true;
    for (const auto& t : m.tasks) all = all && terminal(t, max_attempts);
    if (all) break;
    if (ready > 0 && static_cast<int>(children.size()) < std::min(workers, ready)) {
      const auto log = m.path(concat("logs/worker_", spawned++, ".log"));
      children.push_back(spawn({exe.string(), "worker", "--workdir", m.workdir.string()}, log));
      continue;
    }
    sleep_for(o.poll_seconds);
  }
  for (pid_t pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
  }
}

}  // namespace

std::string to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::running: return "running";
    case TaskStatus::done: return "done";
    case TaskStatus::failed: return "failed";
  }
  return "?";
}

TaskStatus parse_status(const std::string& s) {
  if (s == "pending") return TaskStatus::pending;
  if (s == "running") return TaskStatus::running;
  if (s == "done") return TaskStatus::done;
  if (s == "failed") return TaskStatus::failed;
  throw Error("runtime", concat("unknown task status '", s, "'"));
}

ExecMode parse_mode(const std::string& s) {
  if (s == "inproc") return ExecMode::inproc;
  if (s == "pool") return ExecMode::pool;
  if (s == "dirqueue") return ExecMode::dirqueue;
  throw Error("runtime", concat("unknown execution mode '", s, "' (inproc|pool|dirqueue)"));
}

std::string to_string(ExecMode m) {
  switch (m) {
    case ExecMode::inproc: return "inproc";
    case ExecMode::pool: return "pool";
    case ExecMode::dirqueue: return "dirqueue";
  }
  return "?";
}

bool TaskManifest::complete() const {
  for (const auto& t : tasks)
    if (t.status != TaskStatus::done) return false;
  return !tasks.empty();
}

fs::path task_input_path(int p) { return fs::path("tasks") / concat("task_", p, ".in"); }
fs::path task_output_path(int p) { return fs::path("results") / concat("task_", p, ".out"); }

void write_manifest(const TaskManifest& m) {
  std::ostringstream os;
  os << "pucpi-manifest v1\n";
  os << "run_id " << m.run_id << '\n';
  os << "lambda " << format_exact(m.Lambda) << '\n';
  os << "mesh mesh.txt " << m.mesh_digest << '\n';
  os << "config " << m.config.size() << '\n';
  for (const auto& [k, v] : m.config) os << k << ' ' << v << '\n';
  os << "tasks " << m.tasks.size() << '\n';
  for (const auto& t : m.tasks)
    os << t.subdomain << ' ' << t.input << ' ' << t.input_digest << ' ' << to_string(t.status) << ' '
       << t.attempts << ' ' << (t.output_digest.empty() ? "-" : t.output_digest) << '\n';
  os << "end\n";
  write_file_atomic(m.workdir / "manifest.txt", os.str());
}

TaskManifest read_manifest(const fs::path& workdir) {
  std::istringstream is(read_file(workdir / "manifest.txt"));
  auto fail = [](const std::string& what) -> Error { return Error("runtime", concat("malformed manifest: ", what)); };
  TaskManifest m;
  m.workdir = workdir;
  std::string a, b, c;
  is >> a >> b;
  if (a != "pucpi-manifest" || b != "v1") throw fail("bad header");
  is >> a >> m.run_id;
  if (a != "run_id") throw fail("missing run_id");
  is >> a >> m.Lambda;
  if (a != "lambda") throw fail("missing lambda");
  is >> a >> b >> m.mesh_digest;
  if (a != "mesh") throw fail("missing mesh line");
  size_t n = 0;
  is >> a >> n;
  if (a != "config") throw fail("missing config");
  std::string line;
  std::getline(is, line);
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw fail("truncated config");
    const auto sp = line.find(' ');
    m.config.emplace_back(line.substr(0, sp), sp == std::string::npos ? "" : line.substr(sp + 1));
  }
  is >> a >> n;
  if (a != "tasks") throw fail("missing tasks");
  for (size_t i = 0; i < n; ++i) {
    TaskEntry t;
    std::string status;
    if (!(is >> t.subdomain >> t.input >> t.input_digest >> status >> t.attempts >> t.output_digest))
      throw fail("truncated task list");
    t.status = parse_status(status);
    if (t.output_digest == "-") t.output_digest.clear();
    if (t.subdomain != static_cast<int>(i)) throw fail(concat("task ", i, " out of order"));
    m.tasks.push_back(t);
  }
  is >> a;
  if (a != "end") throw fail("missing end marker");
  return m;
}

std::uint64_t task_seed(std::uint64_t seed, int p) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(p + 1));
}

TaskManifest plan_and_serialize(const MeshTopology& mesh, const CoverPlan& plan, const SpectralConfig& config,
                                std::uint64_t seed, const fs::path& workdir,
                                const std::vector<std::pair<std::string, std::string>>& echo) {
  config.validate();
  validate_cover(mesh, plan);
  for (const char* sub : {"tasks", "results", "queue", "logs"}) fs::create_directories(workdir / sub);
  for (const auto& entry : fs::directory_iterator(workdir / "queue")) fs::remove(entry.path());
  for (const auto& entry : fs::directory_iterator(workdir / "results")) fs::remove(entry.path());
  TaskManifest m;
  m.workdir = workdir;
  m.Lambda = config.Lambda;
  m.config = echo;
  {
    std::ostringstream os;
    write_mesh(os, mesh);
    m.mesh_digest = digest_of(os.str());
    write_file_atomic(workdir / "mesh.txt", os.str());
  }
  std::uint64_t run = fnv1a64(m.mesh_digest);
  for (int p = 0; p < plan.M; ++p) {
    const LocalTask task = make_local_task(mesh, plan, p, config, task_seed(seed, p));
    const std::string bytes = task_to_string(task);
    TaskEntry t;
    t.subdomain = p;
    t.input = task_input_path(p).string();
    t.input_digest = digest_of(bytes);
    write_file_atomic(workdir / t.input, bytes);
    run = fnv1a64(t.input_digest, run);
    m.tasks.push_back(t);
  }
  m.run_id = to_hex(run);
  write_manifest(m);
  return m;
}

TaskManifest execute(TaskManifest m, const ExecuteOptions& o) {
  const int workers = env_workers(o.workers);
  if (workers < 1) throw Error("runtime", "worker count must be >= 1");
  if (o.retries < 0) throw Error("runtime", "retries must be >= 0");
  fs::create_directories(m.workdir / "logs");
  switch (o.mode) {
    case ExecMode::inproc: execute_inproc(m, o, workers); break;
    case ExecMode::pool: execute_pool(m, o, workers); break;
    case ExecMode::dirqueue: execute_dirqueue(m, o, workers); break;
  }
  write_manifest(m);
  if (!m.complete())
    for (const auto& t : m.tasks)
      if (t.status != TaskStatus::done)
        log::warn("run incomplete: subdomain ", t.subdomain, " is ", to_string(t.status), " after ", t.attempts,
                  " attempts");
  return m;
}

std::string run_task_file(const fs::path& input, const fs::path& output, const std::string& expected_digest) {
  const std::string bytes = read_file(input);
  if (!expected_digest.empty() && digest_of(bytes) != expected_digest)
    throw Error("runtime", concat("task input digest mismatch for ", input.string()));
  std::istringstream is(bytes);
  const LocalTask task = read_task(is);
  task.config.validate();
  const LocalBasisResult res = compute_local_basis(task);
  const std::string out = result_to_string(res);
  std::ostringstream tm;
  for (const auto& [k, v] : res.timings) tm << k << ' ' << v << '\n';
  write_file_atomic(output.string() + ".timing", tm.str());
  write_file_atomic(output, out);
  return digest_of(out);
}

int run_queue_worker(const fs::path& workdir, double heartbeat_seconds) {
  const std::string host = hostname();
  int completed = 0;
  for (;;) {
    std::vector<fs::path> ready;
    for (const auto& e : fs::directory_iterator(workdir / "queue"))
      if (e.path().extension() == ".ready") ready.push_back(e.path());
    std::sort(ready.begin(), ready.end());
    bool claimed = false;
    for (const auto& r : ready) {
      fs::path claim = r;
      claim.replace_extension(".claim");
      if (std::rename(r.c_str(), claim.c_str()) != 0) continue;
      claimed = true;
      const std::string stem = r.stem().string();  // task_<p>
      const int p = std::stoi(stem.substr(5));
      auto kv = read_marker(claim);
      write_file_atomic(claim, concat("input ", kv["input"], "\nattempt ", kv["attempt"], "\nhost ", host,
                                      "\npid ", ::getpid(), "\n"));
      std::atomic<bool> stop{false};
      std::thread beat([&] {
        while (!stop) {
          sleep_for(heartbeat_seconds);
          std::error_code ec;
          if (!stop) fs::last_write_time(claim, fs::file_time_type::clock::now(), ec);
        }
      });
      fs::path marker = claim;
      try {
        const std::string digest =
            run_task_file(workdir / task_input_path(p), workdir / task_output_path(p), kv["input"]);
        marker.replace_extension(".done");
        write_file_atomic(marker, concat("output ", digest, "\nattempt ", kv["attempt"], "\n"));
        ++completed;
      } catch (const std::exception& e) {
        marker.replace_extension(".failed");
        write_file_atomic(marker, concat(e.what(), "\n"));
      }
      stop = true;
      beat.join();
      std::error_code ec;
      fs::remove(claim, ec);
      break;
    }
    if (!claimed) return completed;
  }
}

Gathered gather(const TaskManifest& m) {
  Gathered g;
  for (const auto& t : m.tasks)
    if (t.status != TaskStatus::done)
      throw Error("runtime", concat("incomplete manifest: subdomain ", t.subdomain, " is ", to_string(t.status)));
  if (m.tasks.empty()) throw Error("runtime", "manifest has no tasks");
  const std::string mesh_bytes = read_file(m.workdir / "mesh.txt");
  if (digest_of(mesh_bytes) != m.mesh_digest) throw Error("runtime", "mesh digest mismatch");
  {
    std::istringstream is(mesh_bytes);
    g.mesh = read_mesh(is);
  }
  for (const auto& t : m.tasks) {
    const int p = t.subdomain;
    const auto in = m.path(t.input);
    if (!fs::exists(in) || digest_of_file(in) != t.input_digest)
      throw Error("runtime", concat("task input digest mismatch for subdomain ", p));
    const auto out = m.path(task_output_path(p).string());
    if (!fs::exists(out)) throw Error("runtime", concat("missing result for subdomain ", p));
    const std::string bytes = read_file(out);
    if (digest_of(bytes) != t.output_digest)
      throw Error("runtime", concat("result digest mismatch for subdomain ", p));
    std::istringstream is(bytes);
    LocalBasisResult r;
    try {
      r = read_result(is);
    } catch (const Error& e) {
      throw Error("runtime", concat("subdomain ", p, ": ", e.what()));
    }
    if (r.subdomain != p) throw Error("runtime", concat("result file of subdomain ", p, " names subdomain ", r.subdomain));
    g.results.push_back(std::move(r));
  }
  return g;
}

SolveReport gather_and_solve(const TaskManifest& m, const GatherOptions& o) {
  SolveReport rep;
  Stopwatch sw;
  Gathered g = gather(m);
  rep.timings.emplace_back("gather", sw.seconds());
  sw.reset();
  const ReducedProblem rp = assemble_reduced(g.mesh, g.results);
  rep.timings.emplace_back("assemble_reduced", sw.seconds());
  sw.reset();
  const ReducedSolution sol = solve_reduced(rp, m.Lambda, o.dense_cap, o.seed);
  rep.timings.emplace_back("solve_reduced", sw.seconds());

  rep.config = m.config;
  rep.eigenvalues = sol.values;
  rep.certified_count = sol.certified_count;
  rep.count_matches = sol.count_matches;
  rep.method = sol.method;
  rep.reduced_dofs = rp.size;
  rep.nnz_reduced = rp.A.nonZeros();
  const GlobalDofs gd = build_global_dofs(g.mesh);
  rep.full_dofs = gd.size();
  std::vector<int> cells(g.mesh.num_cells());
  for (int c = 0; c < g.mesh.num_cells(); ++c) cells[c] = c;
  rep.nnz_full = assemble(g.mesh, cells, gd.dof_of_vertex, gd.size()).A.nonZeros();

  std::map<std::string, double> local_max;
  for (const auto& r : g.results) {
    rep.subdomains.push_back({r.subdomain, r.n, r.K_modes, r.k_complement, r.sigma_tail, r.info});
    std::ifstream is(m.path(task_output_path(r.subdomain).string() + ".timing"));
    std::string k;
    double v;
    while (is >> k >> v) local_max[k] = std::max(local_max[k], v);
  }
  for (const auto& [k, v] : local_max) rep.timings.emplace_back("local_max." + k, v);
  return rep;
}

}  // namespace pucpi
