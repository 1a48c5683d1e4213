#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pucpi/cover.hpp"
#include "pucpi/global_reduce.hpp"
#include "pucpi/local_subspace.hpp"

namespace pucpi {

enum class TaskStatus { pending, running, done, failed };
std::string to_string(TaskStatus s);
TaskStatus parse_status(const std::string& s);

struct TaskEntry {
  int subdomain = 0;
  std::string input;          ///< relative to the workdir
  std::string input_digest;
  TaskStatus status = TaskStatus::pending;
  int attempts = 0;
  std::string output_digest;  ///< "-" until done
};

/// Workdir layout: manifest.txt, mesh.txt, tasks/task_<p>.in, results/task_<p>.out,
/// queue/task_<p>.{ready,claim,done,failed}, logs/.
struct TaskManifest {
  std::filesystem::path workdir;
  std::string run_id;
  double Lambda = 0.0;
  std::string mesh_digest;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<TaskEntry> tasks;

  bool complete() const;
  std::filesystem::path path(const std::string& rel) const { return workdir / rel; }
};

std::filesystem::path task_input_path(int p);   ///< tasks/task_<p>.in
std::filesystem::path task_output_path(int p);  ///< results/task_<p>.out

void write_manifest(const TaskManifest& m);  ///< atomic replace of manifest.txt
TaskManifest read_manifest(const std::filesystem::path& workdir);

/// Per-task seed derived from the run seed.
std::uint64_t task_seed(std::uint64_t seed, int p);

/// Writes mesh.txt, one task file per subdomain and the manifest with input digests.
TaskManifest plan_and_serialize(const MeshTopology& mesh, const CoverPlan& plan, const SpectralConfig& config,
                                std::uint64_t seed, const std::filesystem::path& workdir,
                                const std::vector<std::pair<std::string, std::string>>& echo = {});

enum class ExecMode { inproc, pool, dirqueue };
ExecMode parse_mode(const std::string& s);
std::string to_string(ExecMode m);

struct ExecuteOptions {
  ExecMode mode = ExecMode::inproc;
  int workers = 1;                          ///< PUCPI_WORKERS overrides
  int retries = 2;                          ///< extra attempts after the first
  std::filesystem::path worker_executable;  ///< pucpi binary; defaults to /proc/self/exe
  double stale_seconds = 30.0;              ///< claim heartbeat age treated as a dead worker
  double poll_seconds = 0.02;
};

/// Runs every task that is not done. Failures are recorded in the manifest and retried up to
/// `retries` times; the returned manifest is complete iff every task succeeded.
TaskManifest execute(TaskManifest manifest, const ExecuteOptions& options);

/// Worker body shared by all modes: reads the task, checks its digest (when given), computes the
/// local basis and writes the result atomically. Returns the output digest.
std::string run_task_file(const std::filesystem::path& input, const std::filesystem::path& output,
                          const std::string& expected_digest = "");

/// Directory-queue worker: claims ready tasks by rename until none is left. Returns the number
/// of tasks it completed.
int run_queue_worker(const std::filesystem::path& workdir, double heartbeat_seconds = 1.0);

/// Parsed and digest-checked results of a complete manifest, ordered by subdomain.
struct Gathered {
  MeshTopology mesh;
  std::vector<LocalBasisResult> results;
};
Gathered gather(const TaskManifest& manifest);

struct GatherOptions {
  int dense_cap = 3000;
  std::uint64_t seed = 1;
};

/// Gathers, assembles and solves the reduced pencil. The report carries no reference data.
SolveReport gather_and_solve(const TaskManifest& manifest, const GatherOptions& options = {});

}  // namespace pucpi
