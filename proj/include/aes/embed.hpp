#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "aes/corpus.hpp"

namespace aes {

using Vector = Eigen::VectorXd;
// One column per sentence, in reading order.
using Sequence = Eigen::MatrixXd;

enum class EmbedderMode { hashed_baseline, file };

struct EmbedderConfig {
  int dim = 32;
  EmbedderMode mode = EmbedderMode::hashed_baseline;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> file_path;

  void validate() const;
};

// Deterministic unit-norm vector for a token string.
Vector token_vector(std::string_view token, int dim, std::uint64_t seed);

// Start/end markers standing in for the classifier and separator positions.
Vector start_marker(int dim, std::uint64_t seed);
Vector end_marker(int dim, std::uint64_t seed);

// Mean over the n token vectors plus the two markers (n + 2 terms).
Vector embed_sentence(const Tokens& tokens, const EmbedderConfig& cfg);

using SentenceKey = std::pair<std::string, int>;
using EmbeddingTable = std::map<SentenceKey, Vector>;

// Key under which prompt sentences are stored in embedding files.
std::string prompt_key(int prompt_id);

EmbeddingTable parse_embedding_file(std::istream& in, const EmbedderConfig& cfg);
EmbeddingTable load_embedding_file(const std::filesystem::path& path, const EmbedderConfig& cfg);
void write_embedding_file(std::ostream& out, int dim, const EmbeddingTable& table);

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual int dim() const = 0;
  // `source_id`/`index` identify the sentence in its original document.
  virtual Vector embed(std::string_view source_id, int index, const Tokens& tokens) const = 0;
};

class HashedEmbedder final : public SentenceEmbedder {
 public:
  explicit HashedEmbedder(EmbedderConfig cfg);
  int dim() const override { return cfg_.dim; }
  Vector embed(std::string_view source_id, int index, const Tokens& tokens) const override;

 private:
  EmbedderConfig cfg_;
};

class TableEmbedder final : public SentenceEmbedder {
 public:
  TableEmbedder(int dim, EmbeddingTable table);
  int dim() const override { return dim_; }
  Vector embed(std::string_view source_id, int index, const Tokens& tokens) const override;

 private:
  int dim_;
  EmbeddingTable table_;
};

std::unique_ptr<SentenceEmbedder> make_embedder(const EmbedderConfig& cfg);

Sequence embed_essay(const Essay& essay, const SentenceEmbedder& embedder);
Sequence embed_prompt(const Prompt& prompt, const SentenceEmbedder& embedder);

}  // namespace aes
