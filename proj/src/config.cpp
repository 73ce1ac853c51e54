#include "aes/config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "run.seed", "run.output",
      "data.corpus", "data.prompts", "data.score_ranges", "data.score_column", "data.score_column_2",
      "data.dictionary", "data.error_counts", "data.error_source", "data.embeddings",
      "embed.mode", "embed.dim",
      "net.hidden", "net.pooling", "net.candidate", "net.dropout",
      "train.batch", "train.epochs", "train.patience", "train.validation_fraction", "train.learning_rate",
      "train.beta1", "train.beta2", "train.epsilon", "train.clip_norm", "train.resample_negatives",
      "boost.learning_rate", "boost.max_depth", "boost.early_stopping", "boost.max_rounds", "boost.lambda",
      "boost.min_child_weight",
      "pipeline.mode", "pipeline.train_condition", "pipeline.inner_folds", "pipeline.holdout_fraction",
      "pipeline.boost_valid_fraction",
      "eval.folds", "eval.condition",
  };
  return keys;
}

template <typename T>
T parse_number(const Config& c, const std::string& key, T fallback) {
  if (!c.has(key)) return fallback;
  const std::string& s = c.get(key);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(ErrorKind::configuration, key + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

bool parse_bool(const Config& c, const std::string& key, bool fallback) {
  if (!c.has(key)) return fallback;
  const std::string& s = c.get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(ErrorKind::configuration, key + ": expected true or false, got '" + s + "'");
}

template <typename F>
auto parse_with(const Config& c, const std::string& key, F parse) -> decltype(parse(std::string_view{})) {
  try {
    return parse(c.get(key));
  } catch (const Error& e) {
    fail(ErrorKind::configuration, key + ": " + e.what());
  }
}

}  // namespace

void Config::merge(std::istream& in, const std::string& origin, const std::filesystem::path& base_dir) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') fail(ErrorKind::configuration, origin + ":" + std::to_string(lineno) + ": bad section");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::configuration, origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    set(section.empty() ? key : section + "." + key, trim(std::string_view(body).substr(eq + 1)), base_dir);
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  merge(in, path.string(), path.parent_path());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::configuration, "override '" + assignment + "' is not key=value");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)), {});
}

void Config::set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir) {
  if (!known_keys().count(key)) fail(ErrorKind::configuration, "unknown setting '" + key + "'");
  entries_[key] = Entry{value, base_dir};
}

const std::string& Config::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorKind::configuration, "missing setting '" + key + "'");
  return it->second.value;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::filesystem::path Config::path(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorKind::configuration, "missing setting '" + key + "'");
  std::filesystem::path p(it->second.value);
  if (p.is_relative() && !it->second.base_dir.empty()) p = it->second.base_dir / p;
  return p.lexically_normal();
}

std::optional<std::filesystem::path> Config::optional_path(const std::string& key) const {
  if (!has(key) || get(key).empty()) return std::nullopt;
  return path(key);
}

std::map<std::string, std::string> Config::snapshot() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, entry] : entries_) out[key] = entry.value;
  return out;
}

void Config::write(std::ostream& out) const {
  for (const auto& [key, entry] : entries_) out << key << " = " << entry.value << '\n';
}

RunConfig make_run_config(const Config& c) {
  RunConfig r;
  if (!c.has("run.seed")) fail(ErrorKind::configuration, "run.seed is required");
  r.seed = parse_number<std::uint64_t>(c, "run.seed", 0);
  if (c.has("run.output")) r.output_dir = c.path("run.output");

  r.corpus = c.optional_path("data.corpus");
  if (c.has("data.prompts")) r.prompt_pattern = c.path("data.prompts").string();
  r.score_ranges = c.optional_path("data.score_ranges");
  r.dictionary = c.optional_path("data.dictionary");
  r.error_counts = c.optional_path("data.error_counts");
  r.embeddings = c.optional_path("data.embeddings");
  r.asap.score_column = c.get_or("data.score_column", r.asap.score_column);
  if (c.has("data.score_column_2")) r.asap.score_column_for[2] = c.get("data.score_column_2");

  const std::string errors = c.get_or("data.error_source", "dictionary");
  if (errors == "dictionary") {
    r.errors = ErrorSource::dictionary;
  } else if (errors == "precomputed") {
    r.errors = ErrorSource::precomputed;
  } else if (errors == "none") {
    r.errors = ErrorSource::none;
  } else {
    fail(ErrorKind::configuration, "data.error_source must be dictionary, precomputed or none");
  }

  const std::string embed_mode = c.get_or("embed.mode", "hashed");
  if (embed_mode == "hashed") {
    r.embedder.mode = EmbedderMode::hashed_baseline;
  } else if (embed_mode == "file") {
    r.embedder.mode = EmbedderMode::file;
    if (!r.embeddings) fail(ErrorKind::configuration, "embed.mode = file needs data.embeddings");
    r.embedder.file_path = r.embeddings;
  } else {
    fail(ErrorKind::configuration, "embed.mode must be hashed or file");
  }
  r.embedder.dim = parse_number<int>(c, "embed.dim", r.embedder.dim);
  r.embedder.seed = Rng::derive(r.seed, "embed");

  auto& net = r.pipeline.net;
  net.input_dim = r.embedder.dim;
  net.hidden_size = parse_number<int>(c, "net.hidden", net.hidden_size);
  net.dropout = parse_number<double>(c, "net.dropout", net.dropout);
  const std::string pooling = c.get_or("net.pooling", "last");
  if (pooling != "last" && pooling != "mean") fail(ErrorKind::configuration, "net.pooling must be last or mean");
  net.pooling = pooling == "last" ? nn::Pooling::last : nn::Pooling::mean;
  const std::string cand = c.get_or("net.candidate", "sigmoid");
  if (cand != "sigmoid" && cand != "tanh") fail(ErrorKind::configuration, "net.candidate must be sigmoid or tanh");
  net.candidate = cand == "sigmoid" ? nn::CandidateActivation::sigmoid : nn::CandidateActivation::tanh;

  auto& tr = r.pipeline.train;
  tr.base_batch = parse_number<int>(c, "train.batch", tr.base_batch);
  tr.max_epochs = parse_number<int>(c, "train.epochs", tr.max_epochs);
  tr.patience = parse_number<int>(c, "train.patience", tr.patience);
  tr.validation_fraction = parse_number<double>(c, "train.validation_fraction", tr.validation_fraction);
  tr.adam.learning_rate = parse_number<double>(c, "train.learning_rate", tr.adam.learning_rate);
  tr.adam.beta1 = parse_number<double>(c, "train.beta1", tr.adam.beta1);
  tr.adam.beta2 = parse_number<double>(c, "train.beta2", tr.adam.beta2);
  tr.adam.epsilon = parse_number<double>(c, "train.epsilon", tr.adam.epsilon);
  tr.clip_norm = parse_number<double>(c, "train.clip_norm", tr.clip_norm);
  tr.resample_negatives = parse_bool(c, "train.resample_negatives", tr.resample_negatives);

  auto& b = r.pipeline.boost;
  b.learning_rate = parse_number<double>(c, "boost.learning_rate", b.learning_rate);
  b.max_depth = parse_number<int>(c, "boost.max_depth", b.max_depth);
  b.early_stopping_rounds = parse_number<int>(c, "boost.early_stopping", b.early_stopping_rounds);
  b.max_rounds = parse_number<int>(c, "boost.max_rounds", b.max_rounds);
  b.lambda = parse_number<double>(c, "boost.lambda", b.lambda);
  b.min_child_weight = parse_number<double>(c, "boost.min_child_weight", b.min_child_weight);

  auto& p = r.pipeline;
  if (c.has("pipeline.mode")) p.mode = parse_with(c, "pipeline.mode", parse_fusion_mode);
  if (c.has("pipeline.train_condition")) p.train_condition = parse_with(c, "pipeline.train_condition", parse_condition);
  p.inner_folds = parse_number<int>(c, "pipeline.inner_folds", p.inner_folds);
  p.holdout_fraction = parse_number<double>(c, "pipeline.holdout_fraction", p.holdout_fraction);
  p.boost_valid_fraction = parse_number<double>(c, "pipeline.boost_valid_fraction", p.boost_valid_fraction);

  r.folds = parse_number<int>(c, "eval.folds", r.folds);
  if (r.folds < 2) fail(ErrorKind::configuration, "eval.folds must be at least 2");
  if (c.has("eval.condition")) r.condition = parse_with(c, "eval.condition", parse_condition);

  try {
    r.embedder.validate();
    p.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::configuration) throw;
    fail(ErrorKind::configuration, e.what());
  }
  return r;
}

}  // namespace aes
