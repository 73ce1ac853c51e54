#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace aes::cli {

// 64-bit FNV-1a of the file bytes, as 16 hex digits.
std::string hash_file(const std::filesystem::path& path);

// Record of one command run: its settings and the files it read and wrote.
struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> inputs;   // path -> hash
  std::map<std::string, std::string> outputs;  // path -> hash

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

// Loads the manifest an upstream command left in `dir` and verifies that
// every file it read or wrote is still present and unchanged. Throws a
// dependency error naming the first stale or missing artifact.
Manifest require_upstream(const std::filesystem::path& dir, const std::string& command);

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& command);

}  // namespace aes::cli
