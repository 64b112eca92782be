#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fet::cli {

// Record of one CLI run, written next to its outputs.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;  // resolved option values
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // path -> sha256 (directories hash every file)
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::string version;
  int exit_code = 0;
  std::string error;

  std::string to_json() const;
  // Writes to a temporary sibling and renames it into place.
  void write(const std::filesystem::path& path) const;
};

std::string sha256_file(const std::filesystem::path& path);
// Hash of a file, or of the sorted relative paths and hashes of a directory.
std::string sha256_path(const std::filesystem::path& path);

}  // namespace fet::cli
