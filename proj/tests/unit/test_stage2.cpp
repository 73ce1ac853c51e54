#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "aes/error.hpp"
#include "aes/stage2.hpp"
#include "oracles.hpp"

using namespace aes;

namespace {

std::vector<StageTwoRow> random_rows(std::size_t n, std::size_t width, Rng& rng) {
  std::vector<StageTwoRow> rows(n);
  for (auto& r : rows) {
    r.x.resize(width);
    for (auto& v : r.x) v = rng.uniform(-1.0, 1.0);
    r.y = rng.uniform01() < oracle::logistic(2.0 * r.x[0] - r.x[1]) ? 1.0 : 0.0;
  }
  return rows;
}

struct BruteSplit {
  bool found = false;
  double threshold = 0.0;
  double left = 0.0, right = 0.0;
};

// Every midpoint between consecutive distinct values, scored with the
// second-order gain at the first boosting round.
BruteSplit brute_force_split(const std::vector<StageTwoRow>& rows, const BoostConfig& cfg) {
  double mean = 0.0;
  for (const auto& r : rows) mean += r.y;
  mean /= static_cast<double>(rows.size());
  const double p = oracle::logistic(std::log(mean / (1.0 - mean)));
  std::vector<double> xs;
  for (const auto& r : rows) xs.push_back(r.x[0]);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  auto score = [&](double g, double h) { return g * g / (h + cfg.lambda); };
  BruteSplit best;
  double best_gain = kMinSplitGain;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    double thr = 0.5 * (xs[k] + xs[k + 1]);
    if (!(thr > xs[k])) thr = xs[k + 1];
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (const auto& r : rows) {
      const double g = p - r.y, h = p * (1.0 - p);
      if (r.x[0] < thr) {
        gl += g;
        hl += h;
      } else {
        gr += g;
        hr += h;
      }
    }
    if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
    const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr));
    if (gain > best_gain * (1.0 + kGainTieTolerance)) {
      best_gain = gain;
      best = BruteSplit{true, thr, -gl / (hl + cfg.lambda), -gr / (hr + cfg.lambda)};
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("stage2") {

TEST_CASE("input assembly") {
  FeatureVector f;
  const ScoreTriple t{0.5, 0.5, 0.5};
  const auto adv = assemble_input(f, t, FusionMode::adversarial);
  CHECK(adv.size() == 12);
  CHECK(assemble_input(f, t, FusionMode::clean).size() == 10);
  for (std::size_t i = 0; i < 9; ++i) CHECK(adv[i] == 0.0);
  CHECK(adv[9] == 0.5);
  CHECK(adv[10] == 0.5);
  CHECK(adv[11] == 0.5);
  CHECK(input_names(FusionMode::adversarial).size() == 12);
}

TEST_CASE("constant targets keep the base score") {
  std::vector<StageTwoRow> rows(20, StageTwoRow{{1.0, 2.0}, 0.5});
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].x[0] = static_cast<double>(i);
  const auto r = train_gbdt(rows, {}, BoostConfig{});
  CHECK(r.model.base_score == 0.0);
  CHECK(r.model.trees.empty());
  CHECK(predict_gbdt(r.model, rows[3].x) == 0.5);
}

TEST_CASE("closed-form predictions") {
  GbdtModel m;
  m.feature_count = 1;
  const std::vector<double> x{0.3};
  CHECK(predict_gbdt(m, x) == 0.5);
  RegressionTree leaf;
  leaf.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 2.5});
  m.trees.push_back(leaf);
  m.base_score = 0.2;
  CHECK(predict_gbdt(m, x) == doctest::Approx(oracle::logistic(0.2 + 0.001 * 2.5)).epsilon(1e-15));
  CHECK_THROWS_AS(predict_gbdt(m, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("binary feature splits between 0 and 1") {
  std::vector<StageTwoRow> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(StageTwoRow{{double(i % 2)}, double(i % 2)});
  BoostConfig cfg;
  cfg.max_depth = 1;
  cfg.max_rounds = 1;
  const auto r = train_gbdt(rows, {}, cfg);
  REQUIRE(r.model.trees.size() == 1);
  const auto& root = r.model.trees[0].nodes[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold == 0.5);
  CHECK(r.model.trees[0].nodes[static_cast<std::size_t>(root.left)].weight < 0.0);
  CHECK(r.model.trees[0].nodes[static_cast<std::size_t>(root.right)].weight > 0.0);
}

TEST_CASE("depth-1 split equals exhaustive threshold search") {
  Rng rng(31);
  BoostConfig cfg;
  cfg.max_depth = 1;
  cfg.max_rounds = 1;
  cfg.min_child_weight = 0.5;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 5 + rng.uniform_index(40);
    std::vector<StageTwoRow> rows(n);
    for (auto& r : rows) r = StageTwoRow{{std::round(rng.uniform(-5, 5) * 4) / 4}, rng.uniform01() < 0.4 ? 1.0 : 0.0};
    const BruteSplit want = brute_force_split(rows, cfg);
    const auto got = train_gbdt(rows, {}, cfg);
    if (got.model.trees.empty()) continue;  // constant target
    const auto& tree = got.model.trees[0];
    if (!want.found) {
      CHECK(tree.nodes.size() == 1);
      continue;
    }
    REQUIRE(tree.nodes.size() == 3);
    CHECK(tree.nodes[0].threshold == want.threshold);
    CHECK(tree.nodes[static_cast<std::size_t>(tree.nodes[0].left)].weight == doctest::Approx(want.left).epsilon(1e-12));
    CHECK(tree.nodes[static_cast<std::size_t>(tree.nodes[0].right)].weight == doctest::Approx(want.right).epsilon(1e-12));
  }
}

TEST_CASE("split gain formula") {
  const double gl = 1.5, hl = 2.0, gr = -0.5, hr = 3.0, lam = 1.0;
  const double want = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - (gl + gr) * (gl + gr) / (hl + hr + lam));
  CHECK(split_gain(gl, hl, gr, hr, lam) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("training loss never increases") {
  Rng rng(4);
  const auto rows = random_rows(50, 12, rng);
  BoostConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_rounds = 200;
  const auto r = train_gbdt(rows, {}, cfg);
  for (std::size_t i = 1; i < r.train_loss.size(); ++i) CHECK(r.train_loss[i] <= r.train_loss[i - 1] + 1e-12);
  for (const auto& t : r.model.trees) {
    CHECK(t.depth() <= cfg.max_depth);
    for (const auto& node : t.nodes) CHECK(std::isfinite(node.weight));
  }
  for (const auto& row : rows) {
    const double p = predict_gbdt(r.model, row.x);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("early stopping truncates to the best validation round") {
  Rng rng(6);
  const auto train = random_rows(80, 4, rng);
  const auto valid = random_rows(40, 4, rng);
  BoostConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.early_stopping_rounds = 10;
  cfg.max_rounds = 500;
  const auto r = train_gbdt(train, valid, cfg);
  CHECK(static_cast<int>(r.model.trees.size()) == r.best_rounds);
  const auto best = std::min_element(r.valid_loss.begin(), r.valid_loss.end());
  CHECK(static_cast<int>(best - r.valid_loss.begin()) == r.best_rounds);
  CHECK(static_cast<int>(r.valid_loss.size()) <= r.best_rounds + cfg.early_stopping_rounds + 1);
}

TEST_CASE("training is deterministic") {
  Rng a(2), b(2);
  const auto rows = random_rows(60, 5, a);
  BoostConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_rounds = 50;
  const auto m1 = train_gbdt(rows, {}, cfg).model;
  const auto m2 = train_gbdt(random_rows(60, 5, b), {}, cfg).model;
  std::ostringstream s1, s2;
  save_gbdt(s1, m1);
  save_gbdt(s2, m2);
  CHECK(s1.str() == s2.str());
}

TEST_CASE("model file round trip") {
  Rng rng(12);
  const auto rows = random_rows(100, 12, rng);
  BoostConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_rounds = 100;
  const auto m = train_gbdt(rows, {}, cfg).model;
  std::stringstream io;
  save_gbdt(io, m);
  const auto back = load_gbdt(io);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(12);
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    CHECK(predict_gbdt(back, x) == predict_gbdt(m, x));
  }
  std::istringstream broken("aes-gbdt 1\nn_trees 2\n");
  CHECK_THROWS_AS(load_gbdt(broken), Error);
}

}
