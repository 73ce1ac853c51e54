#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "aes/error.hpp"
#include "aes/eval.hpp"
#include "oracles.hpp"

using namespace aes;

namespace {

std::vector<RatingPair> pairs_of(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<RatingPair> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(RatingPair{a[i], b[i]});
  return out;
}

Dataset graded_dataset(int prompts, int per_prompt) {
  Dataset ds;
  int next = 0;
  for (int pid = 1; pid <= prompts; ++pid) {
    ds.prompts[pid] = Prompt{pid, ScoreRange{0, 10}, {}, {}};
    for (int i = 0; i < per_prompt; ++i) {
      ds.essays.push_back(make_essay("p" + std::to_string(pid) + "e" + std::to_string(next++), ds.prompts[pid],
                                     "Opening words. Middle part " + std::to_string(i) + ". Closing words.", i % 11));
    }
  }
  return ds;
}

FoldPredictor gold_predictor() {
  return [](const Dataset&, std::span<const Essay> test, int) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& e : test) out[kFused].push_back(e.provenance == Provenance::original ? e.normalized_score : 0.0);
    return out;
  };
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("binning") {
  CHECK(to_bin(0.0) == 0);
  CHECK(to_bin(1.0) == 10);
  CHECK(to_bin(0.55) == 6);
  CHECK(to_bin(0.333) == 3);
  CHECK(to_bin(0.05) == 1);
  CHECK_THROWS_AS(to_bin(1.01), Error);
  CHECK_THROWS_AS(to_bin(-0.01), Error);
}

TEST_CASE("kappa special cases") {
  CHECK(qwk(pairs_of({1, 5, 7}, {1, 5, 7})) == 1.0);
  CHECK(qwk(pairs_of({4, 4}, {4, 4})) == 1.0);
  const double swapped = qwk(pairs_of({0, 10}, {10, 0}));
  CHECK(swapped == oracle::qwk_bruteforce({0, 10}, {10, 0}, 11));
  CHECK(swapped == -1.0);
  CHECK(qwk(pairs_of({3, 3, 3, 3}, {0, 5, 9, 2})) == 0.0);
  CHECK_THROWS_AS(qwk(std::vector<RatingPair>{}), Error);
}

TEST_CASE("kappa matches the double loop, is symmetric and shift invariant") {
  Rng rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.uniform_index(60);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.uniform_index(8));
      b[i] = std::min(7, std::max(0, a[i] + static_cast<int>(rng.uniform_index(5)) - 2));
    }
    const double k = qwk(pairs_of(a, b));
    CHECK(std::abs(k - oracle::qwk_bruteforce(a, b, 11)) <= 1e-12);
    CHECK(k == qwk(pairs_of(b, a)));
    std::vector<int> a3 = a, b3 = b;
    for (auto& v : a3) v += 3;
    for (auto& v : b3) v += 3;
    CHECK(std::abs(qwk(pairs_of(a3, b3)) - k) <= 1e-12);
  }
}

TEST_CASE("independent raters give kappa near zero") {
  Rng rng(5);
  std::vector<RatingPair> p(100000);
  for (auto& r : p) r = RatingPair{static_cast<int>(rng.uniform_index(11)), static_cast<int>(rng.uniform_index(11))};
  CHECK(std::abs(qwk(p)) < 0.05);
}

TEST_CASE("gold predictor scores perfectly and constant predictor scores zero") {
  const Dataset ds = graded_dataset(2, 30);
  const CvResult oracle_run = run_cross_validation(ds, 5, Condition::clean, 1, gold_predictor());
  for (const auto& [pid, k] : oracle_run.report(kFused).per_prompt_qwk) CHECK(k == 1.0);
  CHECK(oracle_run.report(kFused).average_qwk == 1.0);

  const CvResult flat = run_cross_validation(ds, 5, Condition::clean, 1, [](const Dataset&, std::span<const Essay> t, int) {
    return std::map<std::string, std::vector<double>>{{kFused, std::vector<double>(t.size(), 0.3)}};
  });
  for (const auto& [pid, k] : flat.report(kFused).per_prompt_qwk) CHECK(std::abs(k) < 1e-12);
}

TEST_CASE("folds never leak") {
  const Dataset ds = graded_dataset(3, 25);
  std::set<std::string> seen_test;
  run_cross_validation(ds, 5, Condition::mixed, 4, [&](const Dataset& train, std::span<const Essay> test, int) {
    std::set<std::string> train_ids;
    for (const auto& e : train.essays) train_ids.insert(e.id);
    for (const auto& e : test) {
      CHECK(train_ids.count(e.source_id) == 0);
      if (e.provenance == Provenance::original) {
        CHECK(seen_test.insert(e.id).second);
      }
    }
    return std::map<std::string, std::vector<double>>{{kFused, std::vector<double>(test.size(), 0.5)}};
  });
  CHECK(seen_test.size() == ds.essays.size());
}

TEST_CASE("adversarial test sets have the stated composition") {
  const Dataset ds = graded_dataset(2, 100);
  const CvResult perm = run_cross_validation(ds, 5, Condition::permuted, 2, gold_predictor());
  CHECK(std::count_if(perm.predictions.begin(), perm.predictions.end(),
                      [](const PredictionRecord& r) { return r.prompt_id == 1; }) == 200);

  const CvResult mixed = run_cross_validation(ds, 5, Condition::mixed, 2, gold_predictor());
  auto count = [&](Provenance p) {
    return std::count_if(mixed.predictions.begin(), mixed.predictions.end(),
                         [&](const PredictionRecord& r) { return r.prompt_id == 1 && r.provenance == p; });
  };
  CHECK(count(Provenance::original) == 100);
  CHECK(count(Provenance::permuted) == 50);
  CHECK(count(Provenance::prompt_irrelevant) == 50);
  CHECK(mixed.report(kFused).fraction_negatives_below.value() == 1.0);
}

TEST_CASE("reports are reproducible") {
  const Dataset ds = graded_dataset(2, 40);
  auto noisy = [](const Dataset&, std::span<const Essay> test, int fold) {
    Rng rng(static_cast<std::uint64_t>(fold));
    std::vector<double> v;
    for (const auto& e : test) v.push_back(std::clamp(e.normalized_score + 0.1 * rng.normal(), 0.0, 1.0));
    return std::map<std::string, std::vector<double>>{{kFused, v}};
  };
  std::ostringstream a, b;
  write_report(a, run_cross_validation(ds, 5, Condition::mixed, 8, noisy));
  write_report(b, run_cross_validation(ds, 5, Condition::mixed, 8, noisy));
  CHECK(a.str() == b.str());
  CHECK(a.str().find("adver1+2\t1\t") != std::string::npos);
}

}
