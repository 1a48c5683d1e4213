#pragma once

#include <filesystem>
#include <string>

#include "pucpi/driver.hpp"

namespace fixture {

struct Problem {
  pucpi::RunConfig cfg;
  pucpi::MeshTopology mesh;
  pucpi::CoverPlan plan;
  double Lambda = 0.0;
  std::vector<double> reference;  ///< lowest `modes` eigenvalues of the full pencil
};

inline Problem square(int n, int M, int modes, double tol = 1e-3, double radius_factor = 0.2,
                      std::uint64_t seed = 1) {
  Problem p;
  p.cfg.square = n;
  p.cfg.M = M;
  p.cfg.modes = modes;
  p.cfg.tol = tol;
  p.cfg.radius_factor = radius_factor;
  p.cfg.seed = seed;
  p.mesh = pucpi::make_mesh(p.cfg);
  p.Lambda = pucpi::resolve_lambda(p.cfg, p.mesh, &p.reference);
  p.plan = pucpi::make_cover(p.cfg, p.mesh);
  return p;
}

inline pucpi::LocalTask task(const Problem& p, int s) {
  return pucpi::make_local_task(p.mesh, p.plan, s, p.cfg.spectral(p.Lambda), pucpi::task_seed(p.cfg.seed, s));
}

/// Fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pucpi_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
