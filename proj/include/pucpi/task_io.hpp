#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pucpi/local_subspace.hpp"

namespace pucpi {

/// Worker input: `pucpi-task v1` header with the spectral configuration and index lists,
/// followed by the extended-subdomain submesh in pucpi-mesh format.
void write_task(std::ostream& os, const LocalTask& task);
LocalTask read_task(std::istream& is);

/// Worker output: `pucpi-local v1` header, dimensions, sigma tail, diagonal Ritz values and the
/// basis values at owned overlap vertices, all doubles with 17 significant digits.
void write_result(std::ostream& os, const LocalBasisResult& result);
LocalBasisResult read_result(std::istream& is);

std::string task_to_string(const LocalTask& task);
std::string result_to_string(const LocalBasisResult& result);

/// Whole-file helpers. Writes go to a temporary sibling, are flushed to disk and renamed.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace pucpi
