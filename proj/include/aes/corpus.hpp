#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aes/rng.hpp"

namespace aes {

using Tokens = std::vector<std::string>;

enum class Provenance { original, permuted, prompt_irrelevant };

std::string_view to_string(Provenance p);

struct ScoreRange {
  int min = 0;
  int max = 1;
};

// Published score range of each ASAP prompt (ids 1-8).
const std::map<int, ScoreRange>& asap_score_ranges();

struct Prompt {
  int id = 0;
  ScoreRange range;
  std::vector<std::string> sentence_text;
  std::vector<Tokens> sentences;  // empty until prompt text is attached
};

struct Essay {
  std::string id;
  int prompt_id = 0;
  std::string raw_text;
  std::vector<std::string> sentence_text;
  std::vector<Tokens> sentences;
  int gold_score = 0;
  double normalized_score = 0.0;
  Provenance provenance = Provenance::original;

  // Where the sentences came from: for originals this is the essay itself
  // with indices 0..m-1; adversarial copies keep pointing at their source so
  // precomputed embeddings and error counts still resolve.
  std::string source_id;
  std::vector<int> sentence_source;

  std::size_t size() const { return sentences.size(); }
};

struct Dataset {
  std::map<int, Prompt> prompts;
  std::vector<Essay> essays;

  const Prompt& prompt(int id) const;
  // Indices into `essays` of the original essays written for `prompt_id`.
  std::vector<std::size_t> originals_of(int prompt_id) const;
  // Throws validation errors on dangling prompt ids or duplicate essay ids.
  void validate() const;
};

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> ids_in(int fold) const;
  std::size_t fold_size(int fold) const;
};

std::vector<std::string> segment_sentences(std::string_view raw_text);
Tokens tokenize_words(std::string_view sentence);

double normalize_score(int score, const ScoreRange& range);
double normalize_score(int score, const Prompt& prompt);
double rescale_score(double v, const ScoreRange& range);
double rescale_score(double v, const Prompt& prompt);

// Builds an original essay: segments, tokenizes and normalizes the gold score.
Essay make_essay(std::string id, const Prompt& prompt, std::string raw_text, int gold_score);

void attach_prompt_text(Prompt& prompt, std::string_view text);

struct AsapOptions {
  std::string score_column = "domain1_score";
  // Per-prompt column override; essay_set 2 carries two scoring domains.
  std::map<int, std::string> score_column_for;
  std::map<int, ScoreRange> ranges = asap_score_ranges();
};

Dataset parse_asap_tsv(std::istream& in, const AsapOptions& options = {});
Dataset load_asap_tsv(const std::filesystem::path& path, const AsapOptions& options = {});

// "prompt_id = min,max" lines; '#' starts a comment. Entries override `base`.
std::map<int, ScoreRange> load_score_ranges(const std::filesystem::path& path,
                                            std::map<int, ScoreRange> base = asap_score_ranges());

// `pattern` contains "{id}", e.g. "prompts/prompt_{id}.txt". Prompts whose
// file is absent are left without text.
void load_prompt_texts(Dataset& dataset, const std::string& pattern);

// Returns std::nullopt for essays that cannot be meaningfully permuted
// (fewer than two distinct sentences).
std::optional<Essay> make_permuted(const Essay& essay, Rng& rng);

// Draws `count` essays whose prompt differs from `prompt_id` out of `pool`,
// without replacement unless the pool is smaller than `count`. Copies are
// rebound to the target prompt with a zero target.
std::vector<Essay> sample_prompt_irrelevant(std::span<const Essay> pool, int prompt_id,
                                            std::size_t count, Rng& rng);

// m = number of original essays of the target prompt in `dataset`.
std::vector<Essay> sample_prompt_irrelevant(const Dataset& dataset, int prompt_id, Rng& rng);

// Which adversarial essays accompany the originals.
//   permuted:   one permuted copy per permutable essay
//   irrelevant: m cross-prompt essays for a prompt with m essays
//   mixed:      per prompt, floor(m/2) permuted plus the rest cross-prompt,
//               totalling m
enum class Condition { clean = 0, permuted = 1, irrelevant = 2, mixed = 3 };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view text);

// Negatives built from the original essays in `pool`; cross-prompt copies are
// drawn from the same pool.
std::vector<Essay> make_negatives(std::span<const Essay> pool, Condition condition, Rng& rng);

FoldSplit make_folds(const Dataset& dataset, int k, Rng& rng);

void write_folds(std::ostream& out, const FoldSplit& split);
FoldSplit read_folds(std::istream& in);

}  // namespace aes
