#include "aes/embed.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "aes/error.hpp"
#include "aes/rng.hpp"

namespace aes {

namespace {

// Counter-based stream keyed by the token hash; cheap enough to rebuild per call.
class TokenStream {
 public:
  explicit TokenStream(std::uint64_t key) : state_(key) {}
  double uniform01() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

Vector hashed_unit_vector(std::string_view key, int dim, std::uint64_t seed) {
  TokenStream stream(splitmix64(fnv1a64(key) ^ splitmix64(seed)));
  Vector v(dim);
  for (int i = 0; i < dim; i += 2) {
    double u1 = stream.uniform01();
    while (u1 <= 0.0) u1 = stream.uniform01();
    const double u2 = stream.uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v / v.norm();
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void EmbedderConfig::validate() const {
  if (dim < 1) fail(ErrorKind::configuration, "embedding dimension must be positive");
  if (mode == EmbedderMode::file && !file_path) {
    fail(ErrorKind::configuration, "file embedder requires an embedding file path");
  }
}

Vector token_vector(std::string_view token, int dim, std::uint64_t seed) {
  return hashed_unit_vector(token, dim, seed);
}

// Token strings never contain brackets, so these keys cannot collide with words.
Vector start_marker(int dim, std::uint64_t seed) { return hashed_unit_vector("[start]", dim, seed); }
Vector end_marker(int dim, std::uint64_t seed) { return hashed_unit_vector("[end]", dim, seed); }

Vector embed_sentence(const Tokens& tokens, const EmbedderConfig& cfg) {
  Vector sum = start_marker(cfg.dim, cfg.seed) + end_marker(cfg.dim, cfg.seed);
  for (const auto& t : tokens) sum += token_vector(t, cfg.dim, cfg.seed);
  return sum / static_cast<double>(tokens.size() + 2);
}

std::string prompt_key(int prompt_id) { return "prompt:" + std::to_string(prompt_id); }

EmbeddingTable parse_embedding_file(std::istream& in, const EmbedderConfig& cfg) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, "embedding file is empty");
  int dim = 0;
  {
    std::string_view head = trim_view(line);
    if (head.rfind("dim ", 0) != 0) fail(ErrorKind::format, "embedding file must start with 'dim <d>'");
    head.remove_prefix(4);
    head = trim_view(head);
    auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), dim);
    if (ec != std::errc() || p != head.data() + head.size() || dim < 1) {
      fail(ErrorKind::format, "bad dimension header '" + line + "'");
    }
  }
  if (dim != cfg.dim) {
    fail(ErrorKind::format, "embedding file declares dim " + std::to_string(dim) + " but the run expects " +
                                std::to_string(cfg.dim));
  }
  EmbeddingTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = trim_view(line);
    if (body.empty()) continue;
    const std::string where = "embedding line " + std::to_string(lineno);
    auto t1 = body.find('\t');
    auto t2 = t1 == std::string_view::npos ? t1 : body.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) fail(ErrorKind::format, where + ": expected three tab-separated fields");
    std::string id(body.substr(0, t1));
    std::string_view idx_text = body.substr(t1 + 1, t2 - t1 - 1);
    int index = -1;
    auto [ip, iec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), index);
    if (iec != std::errc() || ip != idx_text.data() + idx_text.size() || index < 0) {
      fail(ErrorKind::format, where + ": bad sentence index");
    }
    Vector v(dim);
    const char* p = body.data() + t2 + 1;
    const char* end = body.data() + body.size();
    int count = 0;
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p >= end) break;
      double x = 0.0;
      auto [np, ec] = std::from_chars(p, end, x);
      if (ec != std::errc()) fail(ErrorKind::format, where + ": bad float");
      if (!std::isfinite(x)) fail(ErrorKind::format, where + ": non-finite value");
      if (count < dim) v[count] = x;
      ++count;
      p = np;
    }
    if (count != dim) {
      fail(ErrorKind::format, where + ": expected " + std::to_string(dim) + " values, found " + std::to_string(count));
    }
    SentenceKey key{std::move(id), index};
    if (table.count(key)) {
      warn(where + ": duplicate record for " + key.first + "/" + std::to_string(index) + ", keeping the last");
    }
    table[std::move(key)] = std::move(v);
  }
  return table;
}

EmbeddingTable load_embedding_file(const std::filesystem::path& path, const EmbedderConfig& cfg) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open embedding file " + path.string());
  return parse_embedding_file(in, cfg);
}

void write_embedding_file(std::ostream& out, int dim, const EmbeddingTable& table) {
  out << "dim " << dim << '\n';
  char buf[64];
  for (const auto& [key, v] : table) {
    out << key.first << '\t' << key.second << '\t';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v[i]);
      if (i) out << ' ';
      out.write(buf, p - buf);
    }
    out << '\n';
  }
}

HashedEmbedder::HashedEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Vector HashedEmbedder::embed(std::string_view, int, const Tokens& tokens) const {
  return embed_sentence(tokens, cfg_);
}

TableEmbedder::TableEmbedder(int dim, EmbeddingTable table) : dim_(dim), table_(std::move(table)) {
  for (const auto& [key, v] : table_) {
    if (v.size() != dim_) fail(ErrorKind::dimension, "table vector for " + key.first + " has wrong dimension");
  }
}

Vector TableEmbedder::embed(std::string_view source_id, int index, const Tokens&) const {
  auto it = table_.find(SentenceKey{std::string(source_id), index});
  if (it == table_.end()) {
    fail(ErrorKind::coverage, "no embedding for essay " + std::string(source_id) + " sentence " + std::to_string(index));
  }
  return it->second;
}

std::unique_ptr<SentenceEmbedder> make_embedder(const EmbedderConfig& cfg) {
  cfg.validate();
  if (cfg.mode == EmbedderMode::file) {
    return std::make_unique<TableEmbedder>(cfg.dim, load_embedding_file(*cfg.file_path, cfg));
  }
  return std::make_unique<HashedEmbedder>(cfg);
}

Sequence embed_essay(const Essay& essay, const SentenceEmbedder& embedder) {
  Sequence out(embedder.dim(), static_cast<Eigen::Index>(essay.sentences.size()));
  for (std::size_t i = 0; i < essay.sentences.size(); ++i) {
    const int src = i < essay.sentence_source.size() ? essay.sentence_source[i] : static_cast<int>(i);
    const std::string& id = essay.source_id.empty() ? essay.id : essay.source_id;
    out.col(static_cast<Eigen::Index>(i)) = embedder.embed(id, src, essay.sentences[i]);
  }
  return out;
}

Sequence embed_prompt(const Prompt& prompt, const SentenceEmbedder& embedder) {
  Sequence out(embedder.dim(), static_cast<Eigen::Index>(prompt.sentences.size()));
  const std::string key = prompt_key(prompt.id);
  for (std::size_t i = 0; i < prompt.sentences.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = embedder.embed(key, static_cast<int>(i), prompt.sentences[i]);
  }
  return out;
}

}  // namespace aes
