// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//   acceptance            run everything
//   acceptance 3 5        run the listed criteria only

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "aes/config.hpp"
#include "aes/eval.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace aes;

namespace {

const fs::path kSource = AES_SOURCE_DIR;
const fs::path kCli = AES_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------ shared setup

struct Desk {
  RunConfig rc;
  Dataset dataset;
  ErrorCounter counter = ErrorCounter::none();
  std::unique_ptr<SentenceEmbedder> embedder;
};

Desk desk(bool adversarial_overlay) {
  Config c;
  c.merge_file(kSource / "configs/synthetic.ini");
  if (adversarial_overlay) c.merge_file(kSource / "configs/synthetic-adversarial.ini");
  Desk d;
  d.rc = make_run_config(c);
  d.dataset = load_asap_tsv(*d.rc.corpus);
  load_prompt_texts(d.dataset, *d.rc.prompt_pattern);
  d.counter = ErrorCounter::dictionary(load_dictionary(*d.rc.dictionary));
  d.embedder = make_embedder(d.rc.embedder);
  return d;
}

// ------------------------------------------------------------ criteria

Outcome gradients() {
  Rng rng(2024);
  double worst = 0.0;
  int models = 0;
  for (int d : {2, 4}) {
    for (int h : {3, 5}) {
      for (auto act : {nn::CandidateActivation::sigmoid, nn::CandidateActivation::tanh}) {
        for (auto pool : {nn::Pooling::last, nn::Pooling::mean}) {
          for (int rep = 0; rep < 2; ++rep) {
            nn::NetConfig cfg;
            cfg.input_dim = d;
            cfg.hidden_size = h;
            cfg.candidate = act;
            cfg.pooling = pool;
            nn::NetParams p = nn::NetParams::zeros(d, h);
            for (auto t : nn::tensors(p)) {
              for (auto& v : t) v = rng.uniform(-0.8, 0.8);
            }
            const int n = 1 + static_cast<int>(rng.uniform_index(4));
            std::vector<nn::Matrix> xs;
            for (int i = 0; i < n; ++i) {
              nn::Matrix x(d, 1 + static_cast<int>(rng.uniform_index(6)));
              for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform(-1, 1);
              xs.push_back(std::move(x));
            }
            nn::Batch batch;
            for (int i = 0; i < n; ++i) {
              batch.inputs.push_back(&xs[static_cast<std::size_t>(i)]);
              batch.targets.push_back(rng.uniform01());
              batch.masks.push_back(nn::dropout_mask(h, 0.5, rng));
            }
            worst = std::max(worst, oracle::max_gradient_error(p, cfg, batch, 1e-4));
            ++models;
          }
        }
      }
    }
  }
  return {worst < 1e-4 && models >= 20, std::to_string(models) + " models, max relative error " + fmt("%.2e", worst)};
}

Outcome lstm_oracle() {
  Rng rng(99);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int d = 1 + static_cast<int>(rng.uniform_index(5));
    const int h = 1 + static_cast<int>(rng.uniform_index(5));
    const bool use_tanh = rep % 2 == 0;
    nn::LstmParams p = nn::LstmParams::zeros(d, h);
    for (auto* m : {&p.W, &p.U}) {
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = rng.uniform(-1.5, 1.5);
    }
    for (Eigen::Index k = 0; k < p.b.size(); ++k) p.b(k) = rng.uniform(-1, 1);
    nn::Matrix xs(d, 1 + static_cast<int>(rng.uniform_index(8)));
    std::vector<std::vector<double>> cols;
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
      for (int i = 0; i < d; ++i) xs(i, j) = rng.uniform(-2, 2);
      cols.emplace_back(xs.col(j).data(), xs.col(j).data() + d);
    }
    const auto got = nn::lstm_forward(p, use_tanh ? nn::CandidateActivation::tanh : nn::CandidateActivation::sigmoid, xs);
    const auto want = oracle::lstm_forward(p, use_tanh, cols);
    for (std::size_t t = 0; t < got.size(); ++t) {
      for (int k = 0; k < h; ++k) worst = std::max(worst, std::abs(got[t](k) - want[t][static_cast<std::size_t>(k)]));
    }
  }
  // Zero parameters: c_t = 0.25 + 0.5 c_{t-1}, h_t = 0.5 tanh(c_t).
  double closed = 0.0;
  const nn::LstmParams zero = nn::LstmParams::zeros(3, 4);
  nn::Matrix xs = nn::Matrix::Random(3, 15);
  const auto hs = nn::lstm_forward(zero, nn::CandidateActivation::sigmoid, xs);
  double c = 0.0;
  for (const auto& hv : hs) {
    c = 0.25 + 0.5 * c;
    for (int k = 0; k < 4; ++k) closed = std::max(closed, std::abs(hv(k) - 0.5 * std::tanh(c)));
  }
  return {worst <= 1e-12 && closed <= 1e-12,
          "100 instances, max deviation " + fmt("%.1e", worst) + "; closed form " + fmt("%.1e", closed)};
}

Outcome qwk_oracle() {
  Rng rng(7);
  double worst = 0.0;
  bool identity = true;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<int> a(n), b(n);
    std::vector<RatingPair> pairs(n), self(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.uniform_index(kRatingBins));
      b[i] = rep % 2 ? static_cast<int>(rng.uniform_index(kRatingBins))
                     : std::clamp(a[i] + static_cast<int>(rng.uniform_index(3)) - 1, 0, kRatingBins - 1);
      pairs[i] = RatingPair{a[i], b[i]};
      self[i] = RatingPair{a[i], a[i]};
    }
    worst = std::max(worst, std::abs(qwk(pairs) - oracle::qwk_bruteforce(a, b, kRatingBins)));
    identity = identity && qwk(self) == 1.0;
  }
  std::vector<RatingPair> indep(100000);
  for (auto& p : indep) {
    p = RatingPair{static_cast<int>(rng.uniform_index(kRatingBins)), static_cast<int>(rng.uniform_index(kRatingBins))};
  }
  const double null_k = qwk(indep);
  return {worst <= 1e-12 && identity && std::abs(null_k) < 0.05,
          "max |diff| " + fmt("%.1e", worst) + ", self-agreement " + (identity ? "1" : "not 1") +
              ", independent kappa " + fmt("%+.4f", null_k)};
}

Outcome gbdt_properties() {
  Rng rng(5);
  // Monotone training loss on random 12-wide data.
  bool monotone = true;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<StageTwoRow> rows(50);
    for (auto& r : rows) {
      r.x.resize(12);
      for (auto& v : r.x) v = rng.uniform(-1, 1);
      r.y = rng.uniform01();
    }
    BoostConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.max_rounds = 100;
    const auto res = train_gbdt(rows, {}, cfg);
    for (std::size_t i = 1; i < res.train_loss.size(); ++i) monotone = monotone && res.train_loss[i] <= res.train_loss[i - 1] + 1e-12;
  }
  // Depth-1 stump against exhaustive midpoint search.
  int agree = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 4 + rng.uniform_index(60);
    std::vector<StageTwoRow> rows(n);
    for (auto& r : rows) r = StageTwoRow{{rng.uniform(-3, 3)}, rng.uniform01() < 0.5 ? 1.0 : 0.0};
    if (rep % 3 == 0) rows[0].y = 1.0 - rows[1].y;  // keep the target non-constant
    BoostConfig cfg;
    cfg.max_depth = 1;
    cfg.max_rounds = 1;
    cfg.min_child_weight = 0.0;
    double mean = 0.0;
    for (const auto& r : rows) mean += r.y;
    mean /= static_cast<double>(n);
    if (mean == 0.0 || mean == 1.0) {
      ++agree;
      continue;
    }
    const double p = oracle::logistic(std::log(mean / (1.0 - mean)));
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r.x[0]);
    std::sort(xs.begin(), xs.end());
    double best = kMinSplitGain, best_thr = 0.0;
    bool found = false;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      if (!(xs[k] < xs[k + 1])) continue;
      double thr = 0.5 * (xs[k] + xs[k + 1]);
      if (!(thr > xs[k])) thr = xs[k + 1];
      double gl = 0, hl = 0, gr = 0, hr = 0;
      for (const auto& r : rows) {
        (r.x[0] < thr ? gl : gr) += p - r.y;
        (r.x[0] < thr ? hl : hr) += p * (1 - p);
      }
      const double gain = 0.5 * (gl * gl / (hl + 1) + gr * gr / (hr + 1) - (gl + gr) * (gl + gr) / (hl + hr + 1));
      if (gain > best * (1.0 + kGainTieTolerance)) {
        best = gain;
        best_thr = thr;
        found = true;
      }
    }
    const auto model = train_gbdt(rows, {}, cfg).model;
    const auto& root = model.trees.at(0).nodes.at(0);
    agree += found ? (root.feature == 0 && root.threshold == best_thr) : root.is_leaf();
  }
  // Round trip.
  std::vector<StageTwoRow> rows(200);
  for (auto& r : rows) {
    r.x.resize(12);
    for (auto& v : r.x) v = rng.uniform(-1, 1);
    r.y = r.x[0] + r.x[3] > 0 ? 1.0 : 0.0;
  }
  BoostConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_rounds = 300;
  const GbdtModel m = train_gbdt(rows, {}, cfg).model;
  std::stringstream io;
  save_gbdt(io, m);
  const GbdtModel back = load_gbdt(io);
  bool identical = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(12);
    for (auto& v : x) v = rng.uniform(-1.2, 1.2);
    identical = identical && predict_gbdt(m, x) == predict_gbdt(back, x);
  }
  return {monotone && agree == 100 && identical,
          std::string("loss monotone: ") + (monotone ? "yes" : "no") + ", stumps agreeing " + std::to_string(agree) +
              "/100, round trip " + (identical ? "identical" : "differs")};
}

Outcome clean_cv() {
  Desk d = desk(false);
  const auto& net = d.rc.pipeline.net;
  const CvResult r = cross_validate(d.dataset, d.rc.folds, d.rc.pipeline, *d.embedder, d.counter, d.rc.seed);
  const double fused = r.report(kFused).average_qwk;
  const double feat = r.report(kFeaturesOnly).average_qwk;
  const double sem = r.report(kSemanticOnly).average_qwk;
  const bool dims = net.input_dim == 16 && net.hidden_size == 16;
  return {dims && fused >= 0.6 && fused >= feat - 0.05 && fused >= sem - 0.05,
          "d=" + std::to_string(net.input_dim) + " h=" + std::to_string(net.hidden_size) + ", average QWK fused " +
              fmt("%.3f", fused) + ", features-only " + fmt("%.3f", feat) + ", semantic-only " + fmt("%.3f", sem)};
}

Outcome adversarial() {
  Desk d = desk(true);
  const CvResult r = adversarial_eval(d.dataset, Condition::mixed, d.rc.folds, d.rc.pipeline, *d.embedder, d.counter,
                                      d.rc.seed);
  const auto& fused = r.report(kFused);
  const double feat = r.report(kFeaturesOnly).average_qwk;
  const double sem = r.report(kSemanticOnly).average_qwk;
  const double below = fused.fraction_negatives_below.value_or(0.0);
  return {below >= 0.75 && fused.average_qwk >= feat + 0.15 && fused.average_qwk >= sem + 0.15,
          "negatives below 0.2: " + fmt("%.1f%%", 100 * below) + ", QWK fused " + fmt("%.3f", fused.average_qwk) +
              ", features-only " + fmt("%.3f", feat) + ", semantic-only " + fmt("%.3f", sem)};
}

Outcome separation() {
  Desk d = desk(true);
  Dataset train{d.dataset.prompts, {}};
  std::vector<Essay> held;
  for (std::size_t i = 0; i < d.dataset.essays.size(); ++i) {
    (i % 5 == 0 ? held : train.essays).push_back(d.dataset.essays[i]);
  }
  TrainConfig tc = d.rc.pipeline.train;
  tc.seed = Rng::derive(d.rc.seed, "acceptance/separation");
  const ScoringModel coh = train_coherence(train, *d.embedder, d.rc.pipeline.net, tc);
  const ScoringModel rel = train_prompt_relevance(train, *d.embedder, d.rc.pipeline.net, tc);

  SequenceCache cache(*d.embedder);
  Rng rng(Rng::derive(d.rc.seed, "acceptance/permute"));
  double orig = 0, perm = 0, match = 0, mismatch = 0;
  int n_perm = 0, n_mis = 0;
  for (const auto& e : held) {
    const Prompt& own = d.dataset.prompt(e.prompt_id);
    if (auto p = make_permuted(e, rng)) {
      orig += score_essay(coh, e, own, cache);
      perm += score_essay(coh, *p, own, cache);
      ++n_perm;
    }
    match += score_essay(rel, e, own, cache);
    for (const auto& [pid, other] : d.dataset.prompts) {
      if (pid == e.prompt_id) continue;
      mismatch += score_essay(rel, e, other, cache);
      ++n_mis;
    }
  }
  const double dc = (orig - perm) / n_perm;
  const double dr = match / static_cast<double>(held.size()) - mismatch / n_mis;
  return {dc > 0.3 && dr > 0.3, "held-out gaps: coherence " + fmt("%.3f", dc) + ", prompt relevance " + fmt("%.3f", dr)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "aes-acceptance-determinism";
  fs::remove_all(base);
  std::array<std::string, 2> reports;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = base / ("run" + std::to_string(run));
    const std::string cmd = "\"" + kCli.string() + "\" cv -c \"" + (kSource / "configs/synthetic.ini").string() +
                            "\" -s run.output=\"" + out.string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "aes cv exited with an error"};
    reports[static_cast<std::size_t>(run)] = slurp(out / "cv_report.txt") + slurp(out / "cv_predictions.tsv");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, same ? "two cv runs wrote byte-identical reports (" + std::to_string(reports[0].size()) + " bytes)"
                     : "reports differ"};
}

Outcome asap() {
  const char* cfg = std::getenv("AES_ASAP_CONFIG");
  if (!cfg) return {true, "set AES_ASAP_CONFIG to a settings file for the ASAP corpus", true};
  Config c;
  c.merge_file(cfg);
  const RunConfig rc = make_run_config(c);
  AsapOptions opt = rc.asap;
  if (rc.score_ranges) opt.ranges = load_score_ranges(*rc.score_ranges);
  Dataset ds = load_asap_tsv(*rc.corpus, opt);
  if (rc.prompt_pattern) load_prompt_texts(ds, *rc.prompt_pattern);
  const ErrorCounter counter = rc.errors == ErrorSource::precomputed ? ErrorCounter::precomputed(load_error_counts(*rc.error_counts))
                               : rc.errors == ErrorSource::dictionary ? ErrorCounter::dictionary(load_dictionary(*rc.dictionary))
                                                                      : ErrorCounter::none();
  const auto embedder = make_embedder(rc.embedder);
  const CvResult r = cross_validate(ds, rc.folds, rc.pipeline, *embedder, counter, rc.seed);
  write_report(std::cout, r);
  return {true, "average QWK " + fmt("%.3f", r.report(kFused).average_qwk) + " (no target asserted)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", gradients},
      {2, "LSTM recurrence oracle", lstm_oracle},
      {3, "QWK oracle", qwk_oracle},
      {4, "GBDT properties", gbdt_properties},
      {5, "clean cross-validation", clean_cv},
      {6, "adversarial robustness", adversarial},
      {7, "coherence and relevance separation", separation},
      {8, "report determinism", determinism},
      {9, "ASAP protocol (optional)", asap},
  };
  // Wall-clock limits in seconds; 0 means none.
  const std::map<int, double> limits = {{1, 30}, {5, 300}, {6, 600}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto limit = limits.find(c.id);
    if (limit != limits.end() && secs >= limit->second) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", limit->second) + " s limit";
    }
    std::printf("%s  %d. %s: %s [%.1f s]\n", o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
