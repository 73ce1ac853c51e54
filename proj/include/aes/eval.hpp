#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/pipeline.hpp"

namespace aes {

inline constexpr int kRatingBins = 11;  // the common 0..10 grid
inline constexpr double kNegativeThreshold = 0.2;

// round(normalized * 10), halves rounding up.
int to_bin(double normalized);

struct RatingPair {
  int predicted = 0;
  int gold = 0;
};

double qwk(std::span<const RatingPair> pairs);

inline const std::string kFused = "fused";
inline const std::string kFeaturesOnly = "features_only";
inline const std::string kSemanticOnly = "semantic_only";

struct PredictionRecord {
  std::string essay_id;
  int prompt_id = 0;
  Provenance provenance = Provenance::original;
  int fold = 0;
  double gold = 0.0;  // normalized; zero for negatives
  std::map<std::string, double> scores;

  bool negative() const { return provenance != Provenance::original; }
};

struct EvalReport {
  std::string condition;
  std::string variant;
  std::map<int, double> per_prompt_qwk;
  double average_qwk = 0.0;
  std::optional<double> fraction_negatives_below;
};

struct CvResult {
  std::string condition;
  std::vector<EvalReport> reports;
  std::vector<PredictionRecord> predictions;

  const EvalReport& report(const std::string& variant) const;
};

// Per-variant predictions (normalized scores in [0, 1]) for the test essays.
using FoldPredictor = std::function<std::map<std::string, std::vector<double>>(
    const Dataset& train, std::span<const Essay> test, int fold)>;

// Stratified k-fold harness. Test folds receive negatives for `condition`,
// generated from the fold's own originals.
CvResult run_cross_validation(const Dataset& dataset, int k, Condition condition, std::uint64_t seed,
                              const FoldPredictor& predictor);

EvalReport summarize(std::span<const PredictionRecord> records, const std::string& variant,
                     const std::string& condition);

// Clean protocol: originals only, stage two without coherence/relevance.
CvResult cross_validate(const Dataset& dataset, int k, const PipelineConfig& cfg, const SentenceEmbedder& embedder,
                        const ErrorCounter& counter, std::uint64_t seed);

// Adversarial protocol: negatives for `condition` in train and test, stage
// two on the full 12-value input.
CvResult adversarial_eval(const Dataset& dataset, Condition condition, int k, const PipelineConfig& cfg,
                          const SentenceEmbedder& embedder, const ErrorCounter& counter, std::uint64_t seed);

// Human-readable table, then "condition<TAB>prompt<TAB>qwk" lines.
void write_report(std::ostream& out, const CvResult& result);
// "essay_id<TAB>O_e<TAB>bin" for one variant.
void write_predictions(std::ostream& out, const CvResult& result, const std::string& variant = kFused);

}  // namespace aes
