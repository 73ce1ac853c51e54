#include "aes/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "aes/error.hpp"

namespace aes {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::map<std::string, std::vector<double>> pipeline_predictions(const Pipeline& pipeline, const Dataset& train,
                                                                std::span<const Essay> test,
                                                                const SentenceEmbedder& embedder,
                                                                const ErrorCounter& counter) {
  std::map<std::string, std::vector<double>> out;
  SequenceCache cache(embedder);
  for (const auto& e : test) {
    const EssayScores s = score_with_pipeline(pipeline, e, train.prompt(e.prompt_id), cache, counter);
    out[kFused].push_back(s.fused);
    out[kFeaturesOnly].push_back(s.features_only);
    out[kSemanticOnly].push_back(s.semantic_only);
  }
  return out;
}

}  // namespace

int to_bin(double normalized) {
  if (!(normalized >= 0.0 && normalized <= 1.0)) {
    fail(ErrorKind::range, "score " + std::to_string(normalized) + " outside [0, 1]");
  }
  return static_cast<int>(std::floor(normalized * (kRatingBins - 1) + 0.5));
}

double qwk(std::span<const RatingPair> pairs) {
  if (pairs.empty()) fail(ErrorKind::empty_input, "kappa of an empty rating list");
  // With w_ij = (i-j)^2 / (K-1)^2 both weighted sums reduce to moments:
  //   sum_ij w_ij O_ij = sum_n (a_n - b_n)^2 / (K-1)^2
  //   sum_ij w_ij E_ij = (N_b*sum a^2 + N_a*sum b^2 - 2*sum a*sum b) / (N (K-1)^2)
  double n = 0.0, sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, observed = 0.0;
  for (const auto& p : pairs) {
    if (p.predicted < 0 || p.predicted >= kRatingBins || p.gold < 0 || p.gold >= kRatingBins) {
      fail(ErrorKind::range, "rating outside the 0-10 grid");
    }
    const double a = p.predicted, b = p.gold;
    n += 1.0;
    sa += a;
    sb += b;
    saa += a * a;
    sbb += b * b;
    observed += (a - b) * (a - b);
  }
  const double expected = (n * saa + n * sbb - 2.0 * sa * sb) / n;
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

const EvalReport& CvResult::report(const std::string& variant) const {
  for (const auto& r : reports) {
    if (r.variant == variant) return r;
  }
  fail(ErrorKind::validation, "no report for variant " + variant);
}

EvalReport summarize(std::span<const PredictionRecord> records, const std::string& variant,
                     const std::string& condition) {
  EvalReport report;
  report.condition = condition;
  report.variant = variant;
  std::map<int, std::vector<RatingPair>> by_prompt;
  std::size_t negatives = 0, below = 0;
  for (const auto& r : records) {
    auto it = r.scores.find(variant);
    if (it == r.scores.end()) continue;
    const double p = std::clamp(it->second, 0.0, 1.0);
    by_prompt[r.prompt_id].push_back(RatingPair{to_bin(p), to_bin(r.gold)});
    if (r.negative()) {
      ++negatives;
      if (it->second < kNegativeThreshold) ++below;
    }
  }
  double sum = 0.0;
  for (const auto& [pid, pairs] : by_prompt) {
    report.per_prompt_qwk[pid] = qwk(pairs);
    sum += report.per_prompt_qwk[pid];
  }
  report.average_qwk = by_prompt.empty() ? 0.0 : sum / static_cast<double>(by_prompt.size());
  if (negatives > 0) report.fraction_negatives_below = static_cast<double>(below) / static_cast<double>(negatives);
  return report;
}

CvResult run_cross_validation(const Dataset& dataset, int k, Condition condition, std::uint64_t seed,
                              const FoldPredictor& predictor) {
  dataset.validate();
  Rng fold_rng(Rng::derive(seed, "cv/folds"));
  const FoldSplit split = make_folds(dataset, k, fold_rng);

  CvResult result;
  result.condition = std::string(to_string(condition));
  std::set<std::string> variants;
  for (int fold = 0; fold < k; ++fold) {
    Dataset train{dataset.prompts, {}};
    std::vector<Essay> test;
    for (const auto& e : dataset.essays) {
      auto it = split.assignment.find(e.id);
      if (it == split.assignment.end()) continue;
      (it->second == fold ? test : train.essays).push_back(e);
    }
    if (test.empty()) continue;
    Rng neg_rng(Rng::derive(seed, "cv/test-negatives" + std::to_string(fold)));
    auto negatives = make_negatives(test, condition, neg_rng);
    test.insert(test.end(), std::make_move_iterator(negatives.begin()), std::make_move_iterator(negatives.end()));

    auto predictions = predictor(train, test, fold);
    for (const auto& [variant, values] : predictions) {
      if (values.size() != test.size()) {
        fail(ErrorKind::dimension, "predictor returned " + std::to_string(values.size()) + " scores for " +
                                       std::to_string(test.size()) + " essays");
      }
      variants.insert(variant);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      PredictionRecord rec;
      rec.essay_id = test[i].id;
      rec.prompt_id = test[i].prompt_id;
      rec.provenance = test[i].provenance;
      rec.fold = fold;
      rec.gold = test[i].provenance == Provenance::original ? test[i].normalized_score : 0.0;
      for (const auto& [variant, values] : predictions) rec.scores[variant] = values[i];
      result.predictions.push_back(std::move(rec));
    }
  }
  for (const auto& v : variants) result.reports.push_back(summarize(result.predictions, v, result.condition));
  return result;
}

CvResult cross_validate(const Dataset& dataset, int k, const PipelineConfig& cfg_in, const SentenceEmbedder& embedder,
                        const ErrorCounter& counter, std::uint64_t seed) {
  PipelineConfig cfg = cfg_in;
  cfg.mode = FusionMode::clean;
  return run_cross_validation(dataset, k, Condition::clean, seed,
                              [&](const Dataset& train, std::span<const Essay> test, int fold) {
                                const auto fold_seed = Rng::derive(seed, "cv/pipeline" + std::to_string(fold));
                                Pipeline p = fit_pipeline(train, cfg, embedder, counter, fold_seed);
                                return pipeline_predictions(p, train, test, embedder, counter);
                              });
}

CvResult adversarial_eval(const Dataset& dataset, Condition condition, int k, const PipelineConfig& cfg_in,
                          const SentenceEmbedder& embedder, const ErrorCounter& counter, std::uint64_t seed) {
  if (condition == Condition::clean) fail(ErrorKind::configuration, "adversarial evaluation needs condition 1, 2 or 3");
  PipelineConfig cfg = cfg_in;
  cfg.mode = FusionMode::adversarial;
  cfg.train_condition = condition;
  return run_cross_validation(dataset, k, condition, seed,
                              [&](const Dataset& train, std::span<const Essay> test, int fold) {
                                const auto fold_seed = Rng::derive(seed, "adv/pipeline" + std::to_string(fold));
                                Pipeline p = fit_pipeline(train, cfg, embedder, counter, fold_seed);
                                return pipeline_predictions(p, train, test, embedder, counter);
                              });
}

void write_report(std::ostream& out, const CvResult& result) {
  std::set<int> prompts;
  for (const auto& r : result.reports)
    for (const auto& [pid, q] : r.per_prompt_qwk) prompts.insert(pid);

  out << "condition: " << result.condition << '\n';
  out << "variant        ";
  for (int pid : prompts) out << "  prompt" << pid;
  out << "  average\n";
  for (const auto& r : result.reports) {
    std::string name = r.variant;
    name.resize(15, ' ');
    out << name;
    for (int pid : prompts) {
      auto it = r.per_prompt_qwk.find(pid);
      std::string cell = it == r.per_prompt_qwk.end() ? "-" : fixed(it->second, 3);
      std::string label = "prompt" + std::to_string(pid);
      out << "  " << std::string(label.size() > cell.size() ? label.size() - cell.size() : 0, ' ') << cell;
    }
    out << "  " << fixed(r.average_qwk, 3) << '\n';
  }
  for (const auto& r : result.reports) {
    if (r.fraction_negatives_below) {
      out << "negatives below " << fixed(kNegativeThreshold, 1) << " (" << r.variant
          << "): " << fixed(*r.fraction_negatives_below, 4) << '\n';
    }
  }
  out << '\n';
  for (const auto& r : result.reports) {
    const std::string cond = r.variant == kFused ? r.condition : r.condition + ":" + r.variant;
    for (const auto& [pid, q] : r.per_prompt_qwk) out << cond << '\t' << pid << '\t' << fixed(q, 6) << '\n';
    out << cond << '\t' << "average" << '\t' << fixed(r.average_qwk, 6) << '\n';
  }
}

void write_predictions(std::ostream& out, const CvResult& result, const std::string& variant) {
  for (const auto& r : result.predictions) {
    auto it = r.scores.find(variant);
    if (it == r.scores.end()) continue;
    out << r.essay_id << '\t' << fixed(it->second, 6) << '\t' << to_bin(std::clamp(it->second, 0.0, 1.0)) << '\n';
  }
}

}  // namespace aes
