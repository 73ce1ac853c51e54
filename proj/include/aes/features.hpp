#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

struct FeatureVector {
  double grammar_errors = 0;
  double essay_len_words = 0;
  double essay_len_chars = 0;
  double word_len_mean = 0;
  double word_len_var = 0;
  double sent_len_mean = 0;
  double sent_len_var = 0;
  double clause_count = 0;
  double vocab_size = 0;

  static constexpr std::size_t size = 9;
  std::array<double, size> values() const;
  static const std::array<std::string_view, size>& names();
};

using Dictionary = std::unordered_set<std::string>;

Dictionary parse_dictionary(std::istream& in);
Dictionary load_dictionary(const std::filesystem::path& path);

// Alphabetic tokens missing from the dictionary. Tokens with digits and
// anonymization markers ("@person1") are not checked.
std::size_t count_spell_errors(std::span<const std::string> tokens, const Dictionary& dictionary);

// One clause per non-empty sentence plus one per subordinating marker that
// does not open the sentence.
std::size_t count_clauses(std::span<const Tokens> sentences);

std::map<std::string, int> parse_error_counts(std::istream& in);
std::map<std::string, int> load_error_counts(const std::filesystem::path& path);

class ErrorCounter {
 public:
  static ErrorCounter dictionary(Dictionary words);
  // Counts produced by an external correction system, one unit per edit.
  static ErrorCounter precomputed(std::map<std::string, int> counts);
  static ErrorCounter none();

  int count(const Essay& essay) const;

 private:
  enum class Mode { dictionary_baseline, file, none };
  Mode mode_ = Mode::none;
  Dictionary words_;
  std::map<std::string, int> counts_;
};

FeatureVector extract_features(const Essay& essay, const ErrorCounter& counter);

void write_feature_dump(std::ostream& out, std::span<const std::pair<std::string, FeatureVector>> rows);

}  // namespace aes
