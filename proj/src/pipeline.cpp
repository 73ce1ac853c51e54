#include "aes/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "aes/error.hpp"

namespace aes {

namespace {

// Held-out parts of the training originals, stratified by prompt.
std::vector<std::set<std::string>> held_out_parts(const Dataset& train, const PipelineConfig& cfg, Rng& rng) {
  if (cfg.inner_folds >= 2) {
    FoldSplit split = make_folds(train, cfg.inner_folds, rng);
    std::vector<std::set<std::string>> parts(static_cast<std::size_t>(cfg.inner_folds));
    for (const auto& [id, fold] : split.assignment) parts[static_cast<std::size_t>(fold)].insert(id);
    return parts;
  }
  std::set<std::string> part;
  for (const auto& [pid, prompt] : train.prompts) {
    auto idx = train.originals_of(pid);
    if (idx.size() < 2) continue;
    rng.shuffle(std::span<std::size_t>(idx));
    auto n = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(idx.size())));
    n = std::clamp<std::size_t>(n, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n; ++i) part.insert(train.essays[idx[i]].id);
  }
  return {part};
}

void add_row(StageTwoData& rows, const Essay& e, const ScoreTriple& t, const ErrorCounter& counter, double target) {
  rows.essays.push_back(e);
  rows.features.push_back(extract_features(e, counter));
  rows.triples.push_back(t);
  rows.targets.push_back(target);
}

}  // namespace

void PipelineConfig::validate() const {
  net.validate();
  train.validate();
  boost.validate();
  if (inner_folds == 1 || inner_folds < 0) fail(ErrorKind::configuration, "inner_folds must be 0 or at least 2");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorKind::configuration, "holdout fraction must lie in (0, 1)");
  }
  if (!(boost_valid_fraction >= 0.0 && boost_valid_fraction < 1.0)) {
    fail(ErrorKind::configuration, "boosting validation fraction must lie in [0, 1)");
  }
}

StageOneFit fit_stage_one(const Dataset& train, const PipelineConfig& cfg, const SentenceEmbedder& embedder,
                          const ErrorCounter& counter, std::uint64_t seed) {
  cfg.validate();
  Rng part_rng(Rng::derive(seed, "stage1/parts"));
  const auto parts = held_out_parts(train, cfg, part_rng);
  const bool adversarial = cfg.mode == FusionMode::adversarial;

  StageOneFit out;
  SequenceCache cache(embedder);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    Dataset sub{train.prompts, {}};
    std::vector<Essay> held;
    for (const auto& e : train.essays) {
      if (e.provenance != Provenance::original) continue;
      (parts[j].count(e.id) ? held : sub.essays).push_back(e);
    }
    TrainConfig tc = cfg.train;
    tc.seed = Rng::derive(seed, "stage1/member" + std::to_string(j));
    StageOneModels member;
    member.semantic = train_semantic(sub, embedder, cfg.net, tc);
    if (adversarial) {
      member.coherence = train_coherence(sub, embedder, cfg.net, tc);
      member.relevance = train_prompt_relevance(sub, embedder, cfg.net, tc);
    }
    for (const auto& e : held) {
      add_row(out.rows, e, score_triple(member, e, train.prompt(e.prompt_id), cache), counter, e.normalized_score);
    }
    if (adversarial) {
      Rng neg_rng(Rng::derive(seed, "stage2/negatives" + std::to_string(j)));
      for (const auto& e : make_negatives(held, cfg.train_condition, neg_rng)) {
        add_row(out.rows, e, score_triple(member, e, train.prompt(e.prompt_id), cache), counter, 0.0);
      }
    }
    out.members.push_back(std::move(member));
  }
  return out;
}

StageTwoModels fit_stage_two(const StageTwoData& data, FusionMode mode, const BoostConfig& boost,
                             double valid_fraction, std::uint64_t seed) {
  if (data.size() == 0) fail(ErrorKind::empty_input, "no stage-two training rows");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::derive(seed, "stage2/validation"));
  rng.shuffle(std::span<std::size_t>(order));
  auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(data.size())));
  if (n_valid >= data.size()) n_valid = 0;

  std::vector<StageTwoRow> fused_train, fused_valid, feat_train, feat_valid;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    const auto fv = data.features[i].values();
    StageTwoRow fused{assemble_input(data.features[i], data.triples[i], mode), data.targets[i]};
    StageTwoRow feat{std::vector<double>(fv.begin(), fv.end()), data.targets[i]};
    (k < n_valid ? fused_valid : fused_train).push_back(std::move(fused));
    (k < n_valid ? feat_valid : feat_train).push_back(std::move(feat));
  }
  StageTwoModels models;
  models.fused = train_gbdt(fused_train, fused_valid, boost).model;
  models.fused.mode = std::string(to_string(mode));
  models.features_only = train_gbdt(feat_train, feat_valid, boost).model;
  models.features_only.mode = "features";
  return models;
}

Pipeline fit_pipeline(const Dataset& train, const PipelineConfig& cfg, const SentenceEmbedder& embedder,
                      const ErrorCounter& counter, std::uint64_t seed) {
  StageOneFit s1 = fit_stage_one(train, cfg, embedder, counter, seed);
  Pipeline p;
  p.mode = cfg.mode;
  p.stage_two = fit_stage_two(s1.rows, cfg.mode, cfg.boost, cfg.boost_valid_fraction, seed);
  p.stage_one = std::move(s1.members);
  return p;
}

ScoreTriple ensemble_triple(const std::vector<StageOneModels>& members, const Essay& essay, const Prompt& prompt,
                            SequenceCache& cache) {
  if (members.empty()) return ScoreTriple{};
  ScoreTriple sum{0.0, 0.0, 0.0};
  for (const auto& m : members) {
    const ScoreTriple t = score_triple(m, essay, prompt, cache);
    sum.semantic += t.semantic;
    sum.coherence += t.coherence;
    sum.relevance += t.relevance;
  }
  const double n = static_cast<double>(members.size());
  return ScoreTriple{sum.semantic / n, sum.coherence / n, sum.relevance / n};
}

EssayScores score_with_pipeline(const Pipeline& pipeline, const Essay& essay, const Prompt& prompt,
                                SequenceCache& cache, const ErrorCounter& counter) {
  EssayScores s;
  s.triple = ensemble_triple(pipeline.stage_one, essay, prompt, cache);
  s.features = extract_features(essay, counter);
  s.fused = predict_gbdt(pipeline.stage_two.fused, assemble_input(s.features, s.triple, pipeline.mode));
  const auto fv = s.features.values();
  s.features_only = predict_gbdt(pipeline.stage_two.features_only, std::vector<double>(fv.begin(), fv.end()));
  s.semantic_only = s.triple.semantic;
  return s;
}

}  // namespace aes
