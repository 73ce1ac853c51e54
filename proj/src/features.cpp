#include "aes/features.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "aes/error.hpp"

namespace aes {

namespace {

constexpr std::array<std::string_view, 16> kClauseMarkers = {
    "that", "which", "who",   "whom", "whose", "because", "although", "though",
    "while", "since", "if", "when", "after", "before", "unless", "whereas"};

bool is_clause_marker(std::string_view t) {
  return std::find(kClauseMarkers.begin(), kClauseMarkers.end(), t) != kClauseMarkers.end();
}

bool has_digit(std::string_view t) {
  return std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

bool known(const std::string& token, const Dictionary& dict) {
  if (dict.count(token)) return true;
  // Hyphenated compounds pass when every part is a word.
  if (token.find('-') == std::string::npos) return false;
  std::size_t start = 0;
  while (start <= token.size()) {
    auto dash = token.find('-', start);
    auto part = token.substr(start, dash == std::string::npos ? std::string::npos : dash - start);
    if (!part.empty() && !dict.count(part)) return false;
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  return true;
}

// Population mean and variance of integer counts. The sums are exact, so the
// result does not depend on the order of `xs`.
std::pair<double, double> mean_and_variance(std::span<const std::size_t> xs) {
  if (xs.empty()) return {0.0, 0.0};
  std::uint64_t s = 0, q = 0;
  for (std::size_t x : xs) {
    s += x;
    q += static_cast<std::uint64_t>(x) * x;
  }
  const double n = static_cast<double>(xs.size());
  const double sum = static_cast<double>(s);
  return {sum / n, (n * static_cast<double>(q) - sum * sum) / (n * n)};
}

}  // namespace

std::array<double, FeatureVector::size> FeatureVector::values() const {
  return {grammar_errors, essay_len_words, essay_len_chars, word_len_mean, word_len_var,
          sent_len_mean,  sent_len_var,    clause_count,    vocab_size};
}

const std::array<std::string_view, FeatureVector::size>& FeatureVector::names() {
  static const std::array<std::string_view, size> n = {
      "grammar_errors", "essay_len_words", "essay_len_chars", "word_len_mean", "word_len_var",
      "sent_len_mean",  "sent_len_var",    "clause_count",    "vocab_size"};
  return n;
}

Dictionary parse_dictionary(std::istream& in) {
  Dictionary d;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    if (b == line.size()) continue;
    std::string w = line.substr(b);
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    d.insert(std::move(w));
  }
  return d;
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open dictionary " + path.string());
  return parse_dictionary(in);
}

std::size_t count_spell_errors(std::span<const std::string> tokens, const Dictionary& dictionary) {
  std::size_t errors = 0;
  for (const auto& raw : tokens) {
    if (raw.empty() || raw.front() == '@' || has_digit(raw)) continue;
    std::string t = raw;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!known(t, dictionary)) ++errors;
  }
  return errors;
}

std::size_t count_clauses(std::span<const Tokens> sentences) {
  std::size_t clauses = 0;
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    ++clauses;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (is_clause_marker(s[i])) ++clauses;
    }
  }
  return clauses;
}

std::map<std::string, int> parse_error_counts(std::istream& in) {
  std::map<std::string, int> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "error-count line " + std::to_string(lineno);
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) fail(ErrorKind::format, where + ": expected 'essay_id<TAB>count'");
    std::string id = line.substr(0, tab);
    std::string_view num = std::string_view(line).substr(tab + 1);
    int count = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), count);
    if (ec != std::errc() || p != num.data() + num.size()) fail(ErrorKind::format, where + ": count is not an integer");
    if (count < 0) fail(ErrorKind::format, where + ": negative count");
    if (counts.count(id)) warn(where + ": duplicate essay id " + id + ", keeping the last");
    counts[id] = count;
  }
  return counts;
}

std::map<std::string, int> load_error_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open error-count file " + path.string());
  return parse_error_counts(in);
}

ErrorCounter ErrorCounter::dictionary(Dictionary words) {
  ErrorCounter c;
  c.mode_ = Mode::dictionary_baseline;
  c.words_ = std::move(words);
  return c;
}

ErrorCounter ErrorCounter::precomputed(std::map<std::string, int> counts) {
  ErrorCounter c;
  c.mode_ = Mode::file;
  c.counts_ = std::move(counts);
  return c;
}

ErrorCounter ErrorCounter::none() { return ErrorCounter{}; }

int ErrorCounter::count(const Essay& essay) const {
  switch (mode_) {
    case Mode::dictionary_baseline: {
      std::size_t n = 0;
      for (const auto& s : essay.sentences) n += count_spell_errors(s, words_);
      return static_cast<int>(n);
    }
    case Mode::file: {
      const std::string& key = essay.source_id.empty() ? essay.id : essay.source_id;
      auto it = counts_.find(key);
      if (it == counts_.end()) fail(ErrorKind::coverage, "no grammar-error count for essay " + key);
      return it->second;
    }
    case Mode::none: return 0;
  }
  return 0;
}

FeatureVector extract_features(const Essay& essay, const ErrorCounter& counter) {
  FeatureVector f;
  std::vector<std::size_t> word_lengths;
  std::vector<std::size_t> sentence_lengths;
  std::set<std::string_view> vocabulary;
  for (const auto& s : essay.sentences) {
    if (s.empty()) continue;
    sentence_lengths.push_back(s.size());
    for (const auto& t : s) {
      word_lengths.push_back(t.size());
      vocabulary.insert(t);
    }
  }
  for (const auto& text : essay.sentence_text) {
    f.essay_len_chars += static_cast<double>(
        std::count_if(text.begin(), text.end(), [](char c) { return !std::isspace(static_cast<unsigned char>(c)); }));
  }
  f.grammar_errors = counter.count(essay);
  f.essay_len_words = static_cast<double>(word_lengths.size());
  std::tie(f.word_len_mean, f.word_len_var) = mean_and_variance(word_lengths);
  std::tie(f.sent_len_mean, f.sent_len_var) = mean_and_variance(sentence_lengths);
  f.clause_count = static_cast<double>(count_clauses(essay.sentences));
  f.vocab_size = static_cast<double>(vocabulary.size());
  return f;
}

void write_feature_dump(std::ostream& out, std::span<const std::pair<std::string, FeatureVector>> rows) {
  out << "essay_id";
  for (auto n : FeatureVector::names()) out << '\t' << n;
  out << '\n';
  char buf[64];
  for (const auto& [id, f] : rows) {
    out << id;
    for (double v : f.values()) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << '\t';
      out.write(buf, p - buf);
    }
    out << '\n';
  }
}

}  // namespace aes
