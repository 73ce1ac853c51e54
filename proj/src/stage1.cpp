#include "aes/stage1.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

namespace {

struct Sample {
  Sequence inputs;
  double target = 0.0;
};

using Batches = std::vector<std::vector<Sample>>;
using EpochSource = std::function<Batches(int epoch, Rng& rng)>;

std::vector<const Essay*> originals(const Dataset& ds) {
  std::vector<const Essay*> out;
  for (const auto& e : ds.essays) {
    if (e.provenance == Provenance::original) out.push_back(&e);
  }
  return out;
}

// Shuffled split of the originals into (train, validation).
std::pair<std::vector<const Essay*>, std::vector<const Essay*>> split_validation(std::vector<const Essay*> all,
                                                                                  double fraction, Rng& rng) {
  rng.shuffle(std::span<const Essay*>(all));
  auto n_valid = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
  if (n_valid >= all.size()) n_valid = 0;
  std::vector<const Essay*> valid(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<const Essay*> train(all.begin() + static_cast<std::ptrdiff_t>(n_valid), all.end());
  return {std::move(train), std::move(valid)};
}

template <class T>
std::vector<std::vector<T>> chunk(std::vector<T> items, std::size_t size) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    auto end = std::min(items.size(), i + size);
    out.emplace_back(std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(i)),
                     std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return out;
}

nn::NetConfig resolve_net(const nn::NetConfig& net, const SentenceEmbedder& embedder) {
  nn::NetConfig cfg = net;
  cfg.input_dim = embedder.dim();
  cfg.validate();
  return cfg;
}

double evaluate(const nn::NetParams& params, const nn::NetConfig& cfg, const std::vector<Sample>& samples) {
  nn::Batch batch;
  for (const auto& s : samples) {
    batch.inputs.push_back(&s.inputs);
    batch.targets.push_back(s.target);
  }
  return nn::forward_backward(params, cfg, batch, nullptr).loss;
}

ScoringModel fit(ScorerKind kind, const nn::NetConfig& net, const TrainConfig& cfg, const EpochSource& epochs,
                 const std::vector<Sample>& valid, TrainHistory* history) {
  const std::string label(to_string(kind));
  Rng init_rng(Rng::derive(cfg.seed, "init/" + label));
  Rng mask_rng(Rng::derive(cfg.seed, "dropout/" + label));
  Rng data_rng(Rng::derive(cfg.seed, "batches/" + label));

  nn::NetParams params = nn::init_params(net, init_rng);
  nn::AdamState adam = nn::AdamState::for_params(params, cfg.adam);
  nn::NetParams grads;
  nn::NetParams best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  TrainHistory local;
  TrainHistory& h = history ? *history : local;
  h = TrainHistory{};

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Batches batches = epochs(epoch, data_rng);
    if (epoch == 1) {
      for (const auto& b : batches) h.first_epoch_batches.push_back(b.size());
    }
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& samples : batches) {
      if (samples.empty()) continue;
      nn::Batch batch;
      for (const auto& s : samples) {
        batch.inputs.push_back(&s.inputs);
        batch.targets.push_back(s.target);
        if (net.dropout > 0.0) batch.masks.push_back(nn::dropout_mask(net.hidden_size, net.dropout, mask_rng));
      }
      loss_sum += nn::forward_backward(params, net, batch, &grads).loss;
      ++loss_count;
      nn::clip_global_norm(grads, cfg.clip_norm);
      nn::adam_update(adam, params, grads);
    }
    h.train_loss.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
    if (valid.empty()) {
      best = params;
      h.best_epoch = epoch;
      continue;
    }
    const double vloss = evaluate(params, net, valid);
    h.valid_loss.push_back(vloss);
    if (vloss < best_loss) {
      best_loss = vloss;
      best = params;
      h.best_epoch = epoch;
    } else if (epoch - h.best_epoch >= cfg.patience) {
      break;
    }
  }
  return ScoringModel{kind, nn::ScoringNet{net, std::move(best)}};
}

void require_nonempty(const std::vector<const Essay*>& essays, ScorerKind kind) {
  if (essays.empty()) {
    fail(ErrorKind::empty_input, "no original essays to train the " + std::string(to_string(kind)) + " scorer");
  }
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::semantic: return "semantic";
    case ScorerKind::coherence: return "coherence";
    case ScorerKind::prompt_relevance: return "prompt_relevance";
  }
  return "unknown";
}

ScorerKind parse_scorer_kind(std::string_view text) {
  if (text == "semantic") return ScorerKind::semantic;
  if (text == "coherence") return ScorerKind::coherence;
  if (text == "prompt_relevance") return ScorerKind::prompt_relevance;
  fail(ErrorKind::format, "unknown scorer kind '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (base_batch < 1) fail(ErrorKind::configuration, "batch size must be at least 1");
  if (max_epochs < 0 || patience < 1) fail(ErrorKind::configuration, "epoch budget and patience must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorKind::configuration, "validation fraction must lie in [0, 1)");
  }
  if (!(adam.learning_rate > 0.0)) fail(ErrorKind::configuration, "learning rate must be positive");
}

Sequence SequenceCache::essay(const Essay& e) {
  const int d = embedder_->dim();
  if (e.sentences.empty()) return Sequence::Zero(d, 1);
  const std::string& source = e.source_id.empty() ? e.id : e.source_id;
  auto& cached = sources_[source];
  int needed = 0;
  for (std::size_t i = 0; i < e.sentences.size(); ++i) {
    const int src = i < e.sentence_source.size() ? e.sentence_source[i] : static_cast<int>(i);
    needed = std::max(needed, src + 1);
  }
  if (cached.cols() < needed) {
    // Filled lazily; a NaN first entry marks an unfilled column.
    Sequence grown = Sequence::Constant(d, needed, std::numeric_limits<double>::quiet_NaN());
    if (cached.cols() > 0) grown.leftCols(cached.cols()) = cached;
    cached = std::move(grown);
  }
  Sequence out(d, static_cast<Eigen::Index>(e.sentences.size()));
  for (std::size_t i = 0; i < e.sentences.size(); ++i) {
    const int src = i < e.sentence_source.size() ? e.sentence_source[i] : static_cast<int>(i);
    if (std::isnan(cached(0, src))) cached.col(src) = embedder_->embed(source, src, e.sentences[i]);
    out.col(static_cast<Eigen::Index>(i)) = cached.col(src);
  }
  return out;
}

const Sequence& SequenceCache::prompt(const Prompt& p) {
  auto it = prompts_.find(p.id);
  if (it != prompts_.end()) return it->second;
  return prompts_.emplace(p.id, embed_prompt(p, *embedder_)).first->second;
}

Sequence SequenceCache::prompt_and_essay(const Prompt& p, const Essay& e) {
  if (p.sentences.empty()) {
    fail(ErrorKind::configuration, "prompt " + std::to_string(p.id) + " has no text; prompt relevance needs it");
  }
  const Sequence& ps = prompt(p);
  Sequence es = e.sentences.empty() ? Sequence(embedder_->dim(), 0) : essay(e);
  Sequence out(embedder_->dim(), ps.cols() + es.cols());
  out.leftCols(ps.cols()) = ps;
  out.rightCols(es.cols()) = es;
  return out;
}

ScoringModel untrained_model(ScorerKind kind, const nn::NetConfig& cfg) {
  return ScoringModel{kind, nn::ScoringNet{cfg, nn::NetParams::zeros(cfg.input_dim, cfg.hidden_size)}};
}

ScoringModel train_semantic(const Dataset& train, const SentenceEmbedder& embedder, const nn::NetConfig& net_in,
                            const TrainConfig& cfg, TrainHistory* history) {
  cfg.validate();
  const nn::NetConfig net = resolve_net(net_in, embedder);
  auto all = originals(train);
  require_nonempty(all, ScorerKind::semantic);
  Rng split_rng(Rng::derive(cfg.seed, "validation/semantic"));
  auto [fit_set, valid_set] = split_validation(all, cfg.validation_fraction, split_rng);

  SequenceCache cache(embedder);
  std::vector<Sample> fit_samples, valid;
  for (const Essay* e : fit_set) fit_samples.push_back({cache.essay(*e), e->normalized_score});
  for (const Essay* e : valid_set) valid.push_back({cache.essay(*e), e->normalized_score});

  EpochSource epochs = [&](int, Rng& rng) {
    std::vector<Sample> order = fit_samples;
    rng.shuffle(std::span<Sample>(order));
    return chunk(std::move(order), static_cast<std::size_t>(cfg.base_batch));
  };
  return fit(ScorerKind::semantic, net, cfg, epochs, valid, history);
}

ScoringModel train_coherence(const Dataset& train, const SentenceEmbedder& embedder, const nn::NetConfig& net_in,
                             const TrainConfig& cfg, TrainHistory* history) {
  cfg.validate();
  const nn::NetConfig net = resolve_net(net_in, embedder);
  auto all = originals(train);
  require_nonempty(all, ScorerKind::coherence);
  Rng split_rng(Rng::derive(cfg.seed, "validation/coherence"));
  auto [fit_set, valid_set] = split_validation(all, cfg.validation_fraction, split_rng);

  SequenceCache cache(embedder);
  std::vector<Sample> valid;
  Rng valid_rng(Rng::derive(cfg.seed, "validation-negatives/coherence"));
  for (const Essay* e : valid_set) {
    valid.push_back({cache.essay(*e), e->normalized_score});
    if (auto p = make_permuted(*e, valid_rng)) valid.push_back({cache.essay(*p), 0.0});
  }
  const bool any_permutable = std::any_of(fit_set.begin(), fit_set.end(), [](const Essay* e) {
    return std::set<Tokens>(e->sentences.begin(), e->sentences.end()).size() >= 2;
  });
  if (!any_permutable) warn("coherence training set has no permutable essays; batches carry originals only");

  EpochSource epochs = [&](int, Rng& rng) {
    std::vector<const Essay*> order = fit_set;
    rng.shuffle(std::span<const Essay*>(order));
    Batches batches;
    for (auto& group : chunk(std::move(order), static_cast<std::size_t>(cfg.base_batch))) {
      std::vector<Sample> batch;
      for (const Essay* e : group) batch.push_back({cache.essay(*e), e->normalized_score});
      for (const Essay* e : group) {
        if (auto p = make_permuted(*e, rng)) batch.push_back({cache.essay(*p), 0.0});
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  };
  return fit(ScorerKind::coherence, net, cfg, epochs, valid, history);
}

ScoringModel train_prompt_relevance(const Dataset& train, const SentenceEmbedder& embedder,
                                    const nn::NetConfig& net_in, const TrainConfig& cfg, TrainHistory* history) {
  cfg.validate();
  const nn::NetConfig net = resolve_net(net_in, embedder);
  auto all = originals(train);
  require_nonempty(all, ScorerKind::prompt_relevance);
  std::set<int> prompt_ids;
  for (const Essay* e : all) prompt_ids.insert(e->prompt_id);
  if (prompt_ids.size() < 2) {
    fail(ErrorKind::configuration, "prompt-relevance training needs essays from at least two prompts");
  }
  Rng split_rng(Rng::derive(cfg.seed, "validation/prompt_relevance"));
  auto [fit_set, valid_set] = split_validation(all, cfg.validation_fraction, split_rng);

  std::vector<Essay> fit_pool, valid_pool;
  for (const Essay* e : fit_set) fit_pool.push_back(*e);
  for (const Essay* e : valid_set) valid_pool.push_back(*e);

  SequenceCache cache(embedder);
  auto sample_of = [&](const Essay& e, double target) {
    return Sample{cache.prompt_and_essay(train.prompt(e.prompt_id), e), target};
  };
  auto negatives_for = [&](const std::vector<Essay>& pool, std::span<const Essay> fallback, Rng& rng) {
    std::map<int, std::size_t> per_prompt;
    for (const auto& e : pool) ++per_prompt[e.prompt_id];
    std::vector<Essay> out;
    for (const auto& [pid, m] : per_prompt) {
      const bool has_other = std::any_of(pool.begin(), pool.end(), [pid = pid](const Essay& e) { return e.prompt_id != pid; });
      auto drawn = sample_prompt_irrelevant(has_other ? std::span<const Essay>(pool) : fallback, pid, m, rng);
      std::move(drawn.begin(), drawn.end(), std::back_inserter(out));
    }
    return out;
  };

  std::vector<Sample> valid;
  if (!valid_pool.empty()) {
    Rng valid_rng(Rng::derive(cfg.seed, "validation-negatives/prompt_relevance"));
    for (const auto& e : valid_pool) valid.push_back(sample_of(e, e.normalized_score));
    for (const auto& e : negatives_for(valid_pool, fit_pool, valid_rng)) valid.push_back(sample_of(e, 0.0));
  }

  std::vector<Sample> positives;
  for (const auto& e : fit_pool) positives.push_back(sample_of(e, e.normalized_score));
  std::vector<Sample> fixed_negatives;

  EpochSource epochs = [&](int epoch, Rng& rng) {
    std::vector<Sample> pool = positives;
    if (cfg.resample_negatives || epoch == 1) {
      fixed_negatives.clear();
      for (const auto& e : negatives_for(fit_pool, fit_pool, rng)) fixed_negatives.push_back(sample_of(e, 0.0));
    }
    pool.insert(pool.end(), fixed_negatives.begin(), fixed_negatives.end());
    rng.shuffle(std::span<Sample>(pool));
    // Same update count as the coherence trainer: originals plus as many negatives.
    return chunk(std::move(pool), 2 * static_cast<std::size_t>(cfg.base_batch));
  };
  return fit(ScorerKind::prompt_relevance, net, cfg, epochs, valid, history);
}

ScoringModel train_scorer(ScorerKind kind, const Dataset& train, const SentenceEmbedder& embedder,
                          const nn::NetConfig& net, const TrainConfig& cfg, TrainHistory* history) {
  switch (kind) {
    case ScorerKind::semantic: return train_semantic(train, embedder, net, cfg, history);
    case ScorerKind::coherence: return train_coherence(train, embedder, net, cfg, history);
    case ScorerKind::prompt_relevance: return train_prompt_relevance(train, embedder, net, cfg, history);
  }
  fail(ErrorKind::configuration, "unknown scorer kind");
}

double score_essay(const ScoringModel& model, const Essay& essay, const Prompt& prompt, SequenceCache& cache) {
  if (model.kind == ScorerKind::prompt_relevance) return model.net.score(cache.prompt_and_essay(prompt, essay));
  return model.net.score(cache.essay(essay));
}

ScoreTriple score_triple(const StageOneModels& models, const Essay& essay, const Prompt& prompt,
                         SequenceCache& cache) {
  ScoreTriple t;
  if (models.semantic) t.semantic = score_essay(*models.semantic, essay, prompt, cache);
  if (models.coherence) t.coherence = score_essay(*models.coherence, essay, prompt, cache);
  if (models.relevance) t.relevance = score_essay(*models.relevance, essay, prompt, cache);
  return t;
}

ScoreTriple score_triple(const StageOneModels& models, const Essay& essay, const Prompt& prompt,
                         const SentenceEmbedder& embedder) {
  SequenceCache cache(embedder);
  return score_triple(models, essay, prompt, cache);
}

void save_model(std::ostream& out, const ScoringModel& model) {
  out << "kind " << to_string(model.kind) << '\n';
  nn::save_net(out, model.net);
}

ScoringModel load_model(std::istream& in) {
  std::string word, kind;
  if (!(in >> word >> kind) || word != "kind") fail(ErrorKind::format, "scorer file must start with 'kind <name>'");
  ScoringModel m;
  m.kind = parse_scorer_kind(kind);
  m.net = nn::load_net(in);
  return m;
}

void write_stage_one_scores(std::ostream& out, std::span<const std::pair<std::string, ScoreTriple>> rows) {
  for (const auto& [id, t] : rows) {
    out << id << '\t' << fixed6(t.semantic) << '\t' << fixed6(t.coherence) << '\t' << fixed6(t.relevance) << '\n';
  }
}

std::vector<std::pair<std::string, ScoreTriple>> read_stage_one_scores(std::istream& in) {
  std::vector<std::pair<std::string, ScoreTriple>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 4) fail(ErrorKind::format, "stage-one score line " + std::to_string(lineno) + ": expected 4 fields");
    double v[3];
    for (int k = 0; k < 3; ++k) {
      const std::string& s = f[static_cast<std::size_t>(k) + 1];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v[k]);
      if (ec != std::errc() || p != s.data() + s.size()) {
        fail(ErrorKind::format, "stage-one score line " + std::to_string(lineno) + ": bad number");
      }
    }
    rows.emplace_back(f[0], ScoreTriple{v[0], v[1], v[2]});
  }
  return rows;
}

}  // namespace aes
