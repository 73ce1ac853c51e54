#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/embed.hpp"
#include "aes/features.hpp"
#include "aes/stage1.hpp"
#include "aes/stage2.hpp"

namespace aes {

struct PipelineConfig {
  nn::NetConfig net;
  TrainConfig train;
  BoostConfig boost;
  FusionMode mode = FusionMode::clean;
  // Negatives mixed into the stage-two training rows in adversarial mode.
  Condition train_condition = Condition::mixed;
  // Stage-one scores for stage-two training rows always come from scorers
  // that did not see those rows. inner_folds >= 2 cross-fits over that many
  // inner folds; 0 trains once and scores a single held-out fraction.
  int inner_folds = 0;
  double holdout_fraction = 0.1;
  // Share of stage-two rows kept aside for boosting early stopping.
  double boost_valid_fraction = 0.1;

  void validate() const;
};

// Out-of-sample stage-one scores plus features for every stage-two training row.
struct StageTwoData {
  std::vector<Essay> essays;
  std::vector<FeatureVector> features;
  std::vector<ScoreTriple> triples;
  std::vector<double> targets;

  std::size_t size() const { return essays.size(); }
};

struct StageOneFit {
  std::vector<StageOneModels> members;
  StageTwoData rows;
};

StageOneFit fit_stage_one(const Dataset& train, const PipelineConfig& cfg, const SentenceEmbedder& embedder,
                          const ErrorCounter& counter, std::uint64_t seed);

struct StageTwoModels {
  GbdtModel fused;
  GbdtModel features_only;
};

StageTwoModels fit_stage_two(const StageTwoData& rows, FusionMode mode, const BoostConfig& boost,
                             double valid_fraction, std::uint64_t seed);

struct Pipeline {
  FusionMode mode = FusionMode::clean;
  std::vector<StageOneModels> stage_one;
  StageTwoModels stage_two;
};

Pipeline fit_pipeline(const Dataset& train, const PipelineConfig& cfg, const SentenceEmbedder& embedder,
                      const ErrorCounter& counter, std::uint64_t seed);

// Stage-one scores averaged over the ensemble members.
ScoreTriple ensemble_triple(const std::vector<StageOneModels>& members, const Essay& essay, const Prompt& prompt,
                            SequenceCache& cache);

struct EssayScores {
  ScoreTriple triple;
  FeatureVector features;
  double fused = 0.0;
  double features_only = 0.0;
  double semantic_only = 0.0;
};

EssayScores score_with_pipeline(const Pipeline& pipeline, const Essay& essay, const Prompt& prompt,
                                SequenceCache& cache, const ErrorCounter& counter);

}  // namespace aes
