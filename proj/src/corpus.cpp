#include "aes/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_word_byte(char c) { return is_alnum(c) || static_cast<unsigned char>(c) >= 0x80; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool opens_sentence(char c) { return is_upper(c) || c == '"' || c == '\'' || c == '@' || c == '('; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Abbreviations whose trailing period never ends a sentence.
constexpr std::array<std::string_view, 11> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e"};

bool ends_with_abbreviation(std::string_view text, std::size_t period) {
  std::size_t b = period;
  while (b > 0 && (std::isalpha(static_cast<unsigned char>(text[b - 1])) || text[b - 1] == '.')) --b;
  std::string word;
  for (std::size_t i = b; i < period; ++i) {
    word += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
  }
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void fill_sentences(std::string_view raw, std::vector<std::string>& text, std::vector<Tokens>& tokens) {
  text.clear();
  tokens.clear();
  for (auto& s : segment_sentences(raw)) {
    Tokens t = tokenize_words(s);
    if (t.empty()) continue;  // punctuation-only fragments carry no words
    text.push_back(std::move(s));
    tokens.push_back(std::move(t));
  }
}

std::string join_sentences(const std::vector<std::string>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::permuted: return "permuted";
    case Provenance::prompt_irrelevant: return "prompt_irrelevant";
  }
  return "unknown";
}

const std::map<int, ScoreRange>& asap_score_ranges() {
  static const std::map<int, ScoreRange> ranges = {
      {1, {2, 12}}, {2, {1, 6}}, {3, {0, 3}}, {4, {0, 3}},
      {5, {0, 4}},  {6, {0, 4}}, {7, {0, 30}}, {8, {0, 60}},
  };
  return ranges;
}

const Prompt& Dataset::prompt(int id) const {
  auto it = prompts.find(id);
  if (it == prompts.end()) fail(ErrorKind::validation, "unknown prompt id " + std::to_string(id));
  return it->second;
}

std::vector<std::size_t> Dataset::originals_of(int prompt_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < essays.size(); ++i) {
    if (essays[i].prompt_id == prompt_id && essays[i].provenance == Provenance::original) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  std::set<std::string> seen;
  for (const auto& e : essays) {
    if (!prompts.count(e.prompt_id)) {
      fail(ErrorKind::validation, "essay " + e.id + " refers to unknown prompt " + std::to_string(e.prompt_id));
    }
    if (!seen.insert(e.id).second) fail(ErrorKind::validation, "duplicate essay id " + e.id);
  }
  for (const auto& [id, p] : prompts) {
    if (p.range.min >= p.range.max) {
      fail(ErrorKind::validation, "prompt " + std::to_string(id) + " has an empty score range");
    }
  }
}

std::vector<std::string> FoldSplit::ids_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::size_t FoldSplit::fold_size(int fold) const {
  return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(),
                                                [fold](const auto& kv) { return kv.second == fold; }));
}

std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  std::size_t i = 0;
  auto emit = [&](std::size_t end) {
    auto piece = trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
  };
  while (i < n) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminal(text[j])) ++j;
    std::size_t k = j;
    while (k < n && is_closer(text[k])) ++k;
    if (k >= n || !is_space(text[k])) {
      i = j;
      continue;
    }
    std::size_t next = k;
    while (next < n && is_space(text[next])) ++next;
    if (next >= n) break;
    const bool lone_period = text[i] == '.' && j == i + 1;
    if (opens_sentence(text[next]) && !(lone_period && ends_with_abbreviation(text, i))) {
      emit(k);
      start = next;
      i = next;
      continue;
    }
    i = j;
  }
  if (start < n) emit(n);
  return out;
}

Tokens tokenize_words(std::string_view s) {
  Tokens out;
  std::string cur;
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = s[i];
    const bool next_is_word = i + 1 < n && is_word_byte(s[i + 1]);
    if (is_word_byte(c)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if ((c == '\'' || c == '-') && !cur.empty() && cur != "@" && next_is_word) {
      cur += c;
    } else if (c == '@' && cur.empty() && i + 1 < n && is_alnum(s[i + 1])) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double normalize_score(int score, const ScoreRange& range) {
  if (score < range.min || score > range.max) {
    fail(ErrorKind::range, "score " + std::to_string(score) + " outside [" + std::to_string(range.min) + ", " +
                               std::to_string(range.max) + "]");
  }
  return static_cast<double>(score - range.min) / static_cast<double>(range.max - range.min);
}

double normalize_score(int score, const Prompt& prompt) { return normalize_score(score, prompt.range); }

double rescale_score(double v, const ScoreRange& range) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::range, "normalized score " + std::to_string(v) + " outside [0, 1]");
  const double span = static_cast<double>(range.max - range.min);
  const double raw = range.min + v * span;
  // Undo the division rounding so integer scores survive a round trip.
  const double nearest = std::round(raw);
  return std::abs(raw - nearest) <= 1e-9 * std::max(1.0, span) ? nearest : raw;
}

double rescale_score(double v, const Prompt& prompt) { return rescale_score(v, prompt.range); }

Essay make_essay(std::string id, const Prompt& prompt, std::string raw_text, int gold_score) {
  Essay e;
  e.id = std::move(id);
  e.prompt_id = prompt.id;
  e.raw_text = std::move(raw_text);
  fill_sentences(e.raw_text, e.sentence_text, e.sentences);
  e.gold_score = gold_score;
  e.normalized_score = normalize_score(gold_score, prompt);
  e.provenance = Provenance::original;
  e.source_id = e.id;
  e.sentence_source.resize(e.sentences.size());
  for (std::size_t i = 0; i < e.sentence_source.size(); ++i) e.sentence_source[i] = static_cast<int>(i);
  return e;
}

void attach_prompt_text(Prompt& prompt, std::string_view text) {
  fill_sentences(text, prompt.sentence_text, prompt.sentences);
}

Dataset parse_asap_tsv(std::istream& in, const AsapOptions& options) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, "corpus is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // UTF-8 byte order mark
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_tabs(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::format, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("essay_id");
  const std::size_t c_set = column("essay_set");
  const std::size_t c_text = column("essay");
  const std::size_t c_score_default = column(options.score_column);
  std::map<int, std::size_t> c_score_for;
  for (const auto& [set, name] : options.score_column_for) c_score_for[set] = column(name);

  Dataset ds;

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = "row " + std::to_string(row);
    auto field = [&](std::size_t c) -> const std::string& {
      if (c >= fields.size()) fail(ErrorKind::format, where + ": too few columns");
      return fields[c];
    };
    int set = 0;
    if (!parse_number(field(c_set), set)) fail(ErrorKind::format, where + ": essay_set is not an integer");
    if (set < 1 || set > 8) fail(ErrorKind::range, where + ": essay_set " + std::to_string(set) + " outside 1-8");
    auto pit = ds.prompts.find(set);
    if (pit == ds.prompts.end()) {
      const auto range = options.ranges.find(set);
      if (range == options.ranges.end()) {
        fail(ErrorKind::configuration, where + ": no score range configured for prompt " + std::to_string(set));
      }
      pit = ds.prompts.emplace(set, Prompt{set, range->second, {}, {}}).first;
    }
    const std::size_t c_score = c_score_for.count(set) ? c_score_for.at(set) : c_score_default;
    int score = 0;
    if (!parse_number(field(c_score), score)) {
      fail(ErrorKind::validation, where + ": score column '" + header[c_score] + "' is not an integer");
    }
    const ScoreRange r = pit->second.range;
    if (score < r.min || score > r.max) {
      fail(ErrorKind::validation, where + ": score " + std::to_string(score) + " outside prompt " +
                                      std::to_string(set) + " range " + std::to_string(r.min) + "-" +
                                      std::to_string(r.max));
    }
    std::string id(trim(field(c_id)));
    if (id.empty()) fail(ErrorKind::format, where + ": empty essay_id");
    ds.essays.push_back(make_essay(std::move(id), pit->second, field(c_text), score));
  }
  ds.validate();
  return ds;
}

Dataset load_asap_tsv(const std::filesystem::path& path, const AsapOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open corpus " + path.string());
  return parse_asap_tsv(in, options);
}

std::map<int, ScoreRange> load_score_ranges(const std::filesystem::path& path, std::map<int, ScoreRange> base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open score-range file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto eq = body.find('=');
    auto comma = body.find(',', eq == std::string_view::npos ? 0 : eq);
    if (eq == std::string_view::npos || comma == std::string_view::npos) {
      fail(ErrorKind::format, where + ": expected 'prompt_id = min,max'");
    }
    int id = 0;
    ScoreRange r;
    if (!parse_number(body.substr(0, eq), id) || !parse_number(body.substr(eq + 1, comma - eq - 1), r.min) ||
        !parse_number(body.substr(comma + 1), r.max)) {
      fail(ErrorKind::format, where + ": expected integers");
    }
    if (r.min >= r.max) fail(ErrorKind::validation, where + ": min must be below max");
    base[id] = r;
  }
  return base;
}

void load_prompt_texts(Dataset& dataset, const std::string& pattern) {
  for (auto& [id, prompt] : dataset.prompts) {
    std::string path = pattern;
    auto pos = path.find("{id}");
    if (pos != std::string::npos) path.replace(pos, 4, std::to_string(id));
    std::ifstream in(path);
    if (!in) continue;
    std::stringstream buf;
    buf << in.rdbuf();
    attach_prompt_text(prompt, buf.str());
  }
}

std::optional<Essay> make_permuted(const Essay& essay, Rng& rng) {
  if (essay.provenance != Provenance::original) {
    fail(ErrorKind::validation, "only original essays can be permuted (" + essay.id + ")");
  }
  const std::size_t m = essay.sentences.size();
  if (m < 2) return std::nullopt;
  if (std::all_of(essay.sentences.begin(), essay.sentences.end(),
                  [&](const Tokens& t) { return t == essay.sentences.front(); })) {
    return std::nullopt;
  }
  std::vector<int> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = static_cast<int>(i);
  auto same_as_source = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      if (essay.sentences[order[i]] != essay.sentences[i]) return false;
    }
    return true;
  };
  do {
    rng.shuffle(std::span<int>(order));
  } while (same_as_source());

  Essay out;
  out.id = essay.id + ":perm";
  out.prompt_id = essay.prompt_id;
  out.gold_score = essay.gold_score;
  out.normalized_score = 0.0;
  out.provenance = Provenance::permuted;
  out.source_id = essay.source_id;
  for (int idx : order) {
    out.sentence_text.push_back(essay.sentence_text[idx]);
    out.sentences.push_back(essay.sentences[idx]);
    out.sentence_source.push_back(essay.sentence_source[idx]);
  }
  out.raw_text = join_sentences(out.sentence_text);
  return out;
}

std::vector<Essay> sample_prompt_irrelevant(std::span<const Essay> pool, int prompt_id, std::size_t count, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].prompt_id != prompt_id && pool[i].provenance == Provenance::original) candidates.push_back(i);
  }
  if (candidates.empty()) {
    fail(ErrorKind::configuration, "no essays from other prompts available as negatives for prompt " +
                                       std::to_string(prompt_id));
  }
  std::vector<std::size_t> picks;
  picks.reserve(count);
  if (candidates.size() >= count) {
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + rng.uniform_index(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      picks.push_back(candidates[i]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) picks.push_back(candidates[rng.uniform_index(candidates.size())]);
  }
  std::vector<Essay> out;
  out.reserve(count);
  for (std::size_t n = 0; n < picks.size(); ++n) {
    Essay e = pool[picks[n]];
    e.id = e.id + ":irr" + std::to_string(n) + "@" + std::to_string(prompt_id);
    e.prompt_id = prompt_id;
    e.normalized_score = 0.0;
    e.provenance = Provenance::prompt_irrelevant;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Essay> sample_prompt_irrelevant(const Dataset& dataset, int prompt_id, Rng& rng) {
  return sample_prompt_irrelevant(dataset.essays, prompt_id, dataset.originals_of(prompt_id).size(), rng);
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::clean: return "clean";
    case Condition::permuted: return "adver1";
    case Condition::irrelevant: return "adver2";
    case Condition::mixed: return "adver1+2";
  }
  return "unknown";
}

Condition parse_condition(std::string_view text) {
  if (text == "clean" || text == "0") return Condition::clean;
  if (text == "adver1" || text == "1" || text == "permuted") return Condition::permuted;
  if (text == "adver2" || text == "2" || text == "irrelevant") return Condition::irrelevant;
  if (text == "adver1+2" || text == "3" || text == "mixed") return Condition::mixed;
  fail(ErrorKind::configuration, "unknown adversarial condition '" + std::string(text) + "'");
}

std::vector<Essay> make_negatives(std::span<const Essay> pool, Condition condition, Rng& rng) {
  std::vector<Essay> out;
  if (condition == Condition::clean) return out;
  std::map<int, std::vector<std::size_t>> by_prompt;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].provenance == Provenance::original) by_prompt[pool[i].prompt_id].push_back(i);
  }
  for (const auto& [pid, idx] : by_prompt) {
    std::size_t n_irrelevant = 0;
    if (condition == Condition::permuted) {
      for (std::size_t i : idx) {
        if (auto p = make_permuted(pool[i], rng)) out.push_back(std::move(*p));
      }
    } else if (condition == Condition::irrelevant) {
      n_irrelevant = idx.size();
    } else {
      std::vector<std::size_t> order = idx;
      rng.shuffle(std::span<std::size_t>(order));
      const std::size_t want = idx.size() / 2;
      std::size_t made = 0;
      for (std::size_t i : order) {
        if (made == want) break;
        if (auto p = make_permuted(pool[i], rng)) {
          out.push_back(std::move(*p));
          ++made;
        }
      }
      n_irrelevant = idx.size() - made;
    }
    if (n_irrelevant > 0) {
      auto drawn = sample_prompt_irrelevant(pool, pid, n_irrelevant, rng);
      std::move(drawn.begin(), drawn.end(), std::back_inserter(out));
    }
  }
  return out;
}

FoldSplit make_folds(const Dataset& dataset, int k, Rng& rng) {
  if (k < 2) fail(ErrorKind::configuration, "fold count must be at least 2");
  FoldSplit split;
  split.k = k;
  std::size_t offset = 0;
  for (const auto& [pid, prompt] : dataset.prompts) {
    auto idx = dataset.originals_of(pid);
    if (idx.empty()) continue;
    if (idx.size() < static_cast<std::size_t>(k)) {
      warn("prompt " + std::to_string(pid) + " has " + std::to_string(idx.size()) + " essays, fewer than " +
           std::to_string(k) + " folds");
    }
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      split.assignment[dataset.essays[idx[i]].id] = static_cast<int>((offset + i) % k);
    }
    offset = (offset + idx.size()) % k;
  }
  return split;
}

void write_folds(std::ostream& out, const FoldSplit& split) {
  for (const auto& [id, fold] : split.assignment) out << id << '\t' << fold << '\n';
}

FoldSplit read_folds(std::istream& in) {
  FoldSplit split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_tabs(line);
    int fold = 0;
    if (fields.size() != 2 || !parse_number(fields[1], fold) || fold < 0) {
      fail(ErrorKind::format, "fold file line " + std::to_string(lineno) + ": expected 'essay_id<TAB>fold'");
    }
    split.assignment[fields[0]] = fold;
    split.k = std::max(split.k, fold + 1);
  }
  return split;
}

}  // namespace aes
