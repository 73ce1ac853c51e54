#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/embed.hpp"
#include "aes/neural.hpp"
#include "aes/stage2.hpp"

namespace aes {

enum class ScorerKind { semantic, coherence, prompt_relevance };

std::string_view to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view text);

struct ScoringModel {
  ScorerKind kind = ScorerKind::semantic;
  nn::ScoringNet net;
};

struct TrainConfig {
  int base_batch = 16;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int patience = 10;
  nn::AdamConfig adam;
  double clip_norm = 5.0;
  // Redraw cross-prompt negatives every epoch instead of once.
  bool resample_negatives = true;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean batch loss per epoch (dropout active)
  std::vector<double> valid_loss;  // empty when no validation split was made
  int best_epoch = 0;              // 1-based; the returned parameters come from here
  std::vector<std::size_t> first_epoch_batches;  // sample count of each batch in epoch 1
};

// Memoizes sentence sequences of source essays and prompts. Not thread-safe.
class SequenceCache {
 public:
  explicit SequenceCache(const SentenceEmbedder& embedder) : embedder_(&embedder) {}

  // Essay sentences in reading order (columns). Empty essays yield one zero column.
  Sequence essay(const Essay& essay);
  const Sequence& prompt(const Prompt& prompt);
  // Prompt sentences followed by essay sentences.
  Sequence prompt_and_essay(const Prompt& prompt, const Essay& essay);

  const SentenceEmbedder& embedder() const { return *embedder_; }

 private:
  const SentenceEmbedder* embedder_;
  std::map<std::string, Sequence> sources_;
  std::map<int, Sequence> prompts_;
};

ScoringModel untrained_model(ScorerKind kind, const nn::NetConfig& cfg);

ScoringModel train_semantic(const Dataset& train, const SentenceEmbedder& embedder, const nn::NetConfig& net,
                            const TrainConfig& cfg, TrainHistory* history = nullptr);

// Each batch of originals is extended with a fresh permutation of every
// permutable member, each carrying a zero target.
ScoringModel train_coherence(const Dataset& train, const SentenceEmbedder& embedder, const nn::NetConfig& net,
                             const TrainConfig& cfg, TrainHistory* history = nullptr);

// Inputs are prompt sentences followed by essay sentences; every prompt with
// m essays receives m zero-target essays drawn from other prompts.
ScoringModel train_prompt_relevance(const Dataset& train, const SentenceEmbedder& embedder,
                                    const nn::NetConfig& net, const TrainConfig& cfg,
                                    TrainHistory* history = nullptr);

ScoringModel train_scorer(ScorerKind kind, const Dataset& train, const SentenceEmbedder& embedder,
                          const nn::NetConfig& net, const TrainConfig& cfg, TrainHistory* history = nullptr);

double score_essay(const ScoringModel& model, const Essay& essay, const Prompt& prompt, SequenceCache& cache);

struct StageOneModels {
  std::optional<ScoringModel> semantic;
  std::optional<ScoringModel> coherence;
  std::optional<ScoringModel> relevance;
};

// Missing scorers contribute 0.5, the output of an all-zero head.
ScoreTriple score_triple(const StageOneModels& models, const Essay& essay, const Prompt& prompt,
                         SequenceCache& cache);
ScoreTriple score_triple(const StageOneModels& models, const Essay& essay, const Prompt& prompt,
                         const SentenceEmbedder& embedder);

void save_model(std::ostream& out, const ScoringModel& model);
ScoringModel load_model(std::istream& in);

// "essay_id<TAB>S_e<TAB>C_e<TAB>P_e" with six decimals.
void write_stage_one_scores(std::ostream& out, std::span<const std::pair<std::string, ScoreTriple>> rows);
std::vector<std::pair<std::string, ScoreTriple>> read_stage_one_scores(std::istream& in);

}  // namespace aes
