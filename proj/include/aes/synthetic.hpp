#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

// Planted-signal corpus for offline experiments. Every essay has a latent
// quality q in [0, 1] that drives sentence count, sentence length, advanced
// vocabulary, subordinate clauses and (inversely) misspellings; the gold
// score is a noisy monotone function of q. Essays open with an introduction
// sentence and close with a conclusion sentence, and each prompt owns a
// disjoint topic vocabulary.
struct SyntheticConfig {
  int prompts = 3;             // ids 1..prompts, at most 8
  int essays_per_prompt = 200;
  double score_noise = 0.05;   // std-dev of the noise added to q before scoring
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  Dataset dataset;
  std::vector<std::string> dictionary;  // every correctly spelled word used
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg);

// Writes essays.tsv (ASAP columns), prompt_<id>.txt and words.txt into `dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace aes
