#include "manifest.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "aes/error.hpp"
#include "aes/rng.hpp"
#include "json.hpp"

namespace aes::cli {

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

void Manifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = hash_file(path); }
void Manifest::add_output(const std::filesystem::path& path) { outputs[path.string()] = hash_file(path); }

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& command) {
  return dir / ("manifest." + command + ".json");
}

void Manifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::dependency, "missing " + path.string() + "; run the upstream command first");
  try {
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

Manifest require_upstream(const std::filesystem::path& dir, const std::string& command) {
  const Manifest m = Manifest::load(manifest_path(dir, command));
  auto check = [&](const std::map<std::string, std::string>& files, const char* role) {
    for (const auto& [path, hash] : files) {
      if (!std::filesystem::exists(path)) {
        fail(ErrorKind::dependency, std::string(role) + " " + path + " of '" + command + "' is missing");
      }
      if (hash_file(path) != hash) {
        fail(ErrorKind::dependency, std::string(role) + " " + path + " changed since '" + command +
                                        "' ran; rerun it");
      }
    }
  };
  check(m.inputs, "input");
  check(m.outputs, "output");
  return m;
}

}  // namespace aes::cli
