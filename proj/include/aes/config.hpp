#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "aes/corpus.hpp"
#include "aes/embed.hpp"
#include "aes/pipeline.hpp"

namespace aes {

// Layered key-value settings. Files hold "key = value" lines under optional
// "[section]" headers (keys become "section.key"); '#' and ';' start
// comments. Later layers replace earlier ones key by key.
class Config {
 public:
  void merge(std::istream& in, const std::string& origin, const std::filesystem::path& base_dir);
  void merge_file(const std::filesystem::path& path);
  // "section.key=value"; relative paths resolve against the working directory.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  // Relative paths resolve against the directory of the file that set them.
  std::filesystem::path path(const std::string& key) const;
  std::optional<std::filesystem::path> optional_path(const std::string& key) const;

  std::map<std::string, std::string> snapshot() const;
  // Canonical "key = value" dump, sorted by key.
  void write(std::ostream& out) const;

 private:
  struct Entry {
    std::string value;
    std::filesystem::path base_dir;
  };
  std::map<std::string, Entry> entries_;
};

enum class ErrorSource { dictionary, precomputed, none };

struct RunConfig {
  std::optional<std::filesystem::path> corpus;
  std::optional<std::string> prompt_pattern;  // contains "{id}"
  std::optional<std::filesystem::path> score_ranges;
  std::optional<std::filesystem::path> dictionary;
  std::optional<std::filesystem::path> error_counts;
  std::optional<std::filesystem::path> embeddings;
  std::filesystem::path output_dir = "out";

  AsapOptions asap;
  ErrorSource errors = ErrorSource::dictionary;
  EmbedderConfig embedder;
  PipelineConfig pipeline;
  int folds = 5;
  Condition condition = Condition::mixed;
  std::uint64_t seed = 0;
};

// Throws a configuration error for unknown keys, malformed values or a
// missing run.seed.
RunConfig make_run_config(const Config& config);

}  // namespace aes
