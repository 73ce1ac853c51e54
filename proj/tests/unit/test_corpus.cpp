#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "aes/corpus.hpp"
#include "aes/error.hpp"

using namespace aes;

namespace {

Prompt prompt_with_range(int id, int lo, int hi) { return Prompt{id, ScoreRange{lo, hi}, {}, {}}; }

Dataset small_dataset(const std::vector<int>& per_prompt) {
  Dataset ds;
  int next = 0;
  for (std::size_t p = 0; p < per_prompt.size(); ++p) {
    const int pid = static_cast<int>(p) + 1;
    ds.prompts[pid] = prompt_with_range(pid, 0, 10);
    for (int i = 0; i < per_prompt[p]; ++i) {
      ds.essays.push_back(make_essay("e" + std::to_string(next++), ds.prompts[pid],
                                     "First line here. Second line " + std::to_string(i) + ". Third one.", i % 11));
    }
  }
  return ds;
}

int with_rejection(std::mt19937_64& raw, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t x = raw();
  while (x < threshold) x = raw();
  return static_cast<int>(x % n);
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("normalization uses the published ranges") {
  const auto& r = asap_score_ranges();
  CHECK(normalize_score(2, r.at(1)) == 0.0);
  CHECK(normalize_score(30, r.at(7)) == 1.0);
  CHECK(normalize_score(7, r.at(1)) == 0.5);
  CHECK(normalize_score(8, r.at(8)) == doctest::Approx(8.0 / 60.0).epsilon(1e-15));
  CHECK(rescale_score(0.5, r.at(2)) == 3.5);
  CHECK_THROWS_AS(normalize_score(13, r.at(1)), Error);
  CHECK_THROWS_AS(normalize_score(1, r.at(1)), Error);
}

TEST_CASE("published ranges") {
  const auto& r = asap_score_ranges();
  const std::map<int, std::pair<int, int>> want{{1, {2, 12}}, {2, {1, 6}}, {3, {0, 3}}, {4, {0, 3}},
                                                {5, {0, 4}},  {6, {0, 4}}, {7, {0, 30}}, {8, {0, 60}}};
  for (const auto& [pid, mm] : want) {
    CHECK(r.at(pid).min == mm.first);
    CHECK(r.at(pid).max == mm.second);
  }
}

TEST_CASE("normalization round trip is exact for every prompt") {
  for (const auto& [pid, range] : asap_score_ranges()) {
    for (int s = range.min; s <= range.max; ++s) CHECK(rescale_score(normalize_score(s, range), range) == s);
  }
}

TEST_CASE("sentence segmentation") {
  CHECK(segment_sentences("I ran. It rained!") == std::vector<std::string>{"I ran.", "It rained!"});
  CHECK(segment_sentences("").empty());
  CHECK(segment_sentences("Mr. Smith left. He returned.") ==
        std::vector<std::string>{"Mr. Smith left.", "He returned."});
  CHECK(segment_sentences("Wait... what? Yes.") == std::vector<std::string>{"Wait... what?", "Yes."});
  CHECK(segment_sentences("no terminal punctuation") == std::vector<std::string>{"no terminal punctuation"});
}

TEST_CASE("tokenization") {
  CHECK(tokenize_words("The cat sat.") == Tokens{"the", "cat", "sat"});
  CHECK(tokenize_words("don't re-do") == Tokens{"don't", "re-do"});
  CHECK(tokenize_words("  ").empty());
  CHECK(tokenize_words("Dear @CAPS1, hi") == Tokens{"dear", "@caps1", "hi"});
}

TEST_CASE("tsv loading") {
  std::istringstream in(
      "essay_id\tessay_set\tessay\tdomain1_score\n"
      "1\t1\tShort essay. Two sentences.\t2\n"
      "2\t7\tAnother one.\t30\n"
      "3\t1\tMiddle score here.\t7\n");
  const Dataset ds = parse_asap_tsv(in);
  REQUIRE(ds.essays.size() == 3);
  CHECK(ds.essays[0].normalized_score == 0.0);
  CHECK(ds.essays[0].sentences.size() == 2);
  CHECK(ds.essays[1].normalized_score == 1.0);
  CHECK(ds.essays[2].normalized_score == 0.5);
  CHECK(ds.prompts.size() == 2);

  std::istringstream bad("essay_id\tessay_set\tessay\tdomain1_score\n1\t1\tText.\t13\n");
  CHECK_THROWS_AS(parse_asap_tsv(bad), Error);
  std::istringstream missing("essay_id\tessay\n1\tText.\n");
  try {
    parse_asap_tsv(missing);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
  }
}

TEST_CASE("score column override per prompt") {
  std::istringstream in(
      "essay_id\tessay_set\tessay\tdomain1_score\tdomain2_score\n"
      "1\t2\tSome text.\t6\t4\n");
  AsapOptions opt;
  opt.score_column_for[2] = "domain2_score";
  opt.ranges[2] = ScoreRange{1, 4};
  const Dataset ds = parse_asap_tsv(in, opt);
  CHECK(ds.essays[0].gold_score == 4);
  CHECK(ds.essays[0].normalized_score == 1.0);
}

TEST_CASE("permutation of two sentences swaps them") {
  const Prompt p = prompt_with_range(1, 0, 10);
  const Essay e = make_essay("x", p, "Alpha one. Beta two.", 5);
  Rng rng(0);
  const auto perm = make_permuted(e, rng);
  REQUIRE(perm);
  CHECK(perm->sentence_text == std::vector<std::string>{"Beta two.", "Alpha one."});
  CHECK(perm->provenance == Provenance::permuted);
  CHECK(perm->normalized_score == 0.0);
  CHECK(perm->source_id == "x");
  CHECK(perm->sentence_source == std::vector<int>{1, 0});
}

TEST_CASE("single-sentence essays are not permutable") {
  const Prompt p = prompt_with_range(1, 0, 10);
  Rng rng(0);
  CHECK_FALSE(make_permuted(make_essay("x", p, "Only one sentence.", 5), rng));
  CHECK_FALSE(make_permuted(make_essay("y", p, "Same. Same.", 5), rng));
}

TEST_CASE("three-sentence permutation follows the seeded draw") {
  const Prompt p = prompt_with_range(1, 0, 10);
  const Essay e = make_essay("x", p, "Aa. Bb. Cc.", 5);
  Rng rng(42);
  const auto perm = make_permuted(e, rng);
  REQUIRE(perm);

  // Fisher-Yates from the back on the raw engine, repeated until the order moves.
  std::mt19937_64 raw(42);
  std::vector<int> order{0, 1, 2};
  do {
    for (int i = 3; i > 1; --i) std::swap(order[static_cast<std::size_t>(i - 1)],
                                          order[static_cast<std::size_t>(with_rejection(raw, static_cast<std::uint64_t>(i)))]);
  } while (order == std::vector<int>{0, 1, 2});
  CHECK(perm->sentence_source == order);
  std::multiset<std::string> a(e.sentence_text.begin(), e.sentence_text.end());
  std::multiset<std::string> b(perm->sentence_text.begin(), perm->sentence_text.end());
  CHECK(a == b);
}

TEST_CASE("permutation preserves the multiset on random essays") {
  const Prompt p = prompt_with_range(1, 0, 10);
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    std::string text;
    const int n = 2 + static_cast<int>(rng.uniform_index(8));
    for (int s = 0; s < n; ++s) text += "Sentence number " + std::to_string(rng.uniform_index(4)) + ". ";
    const Essay e = make_essay("r", p, text, 3);
    const auto perm = make_permuted(e, rng);
    if (!perm) continue;
    CHECK(perm->size() == e.size());
    std::multiset<Tokens> a(e.sentences.begin(), e.sentences.end()), b(perm->sentences.begin(), perm->sentences.end());
    CHECK(a == b);
    CHECK(perm->sentences != e.sentences);
  }
}

TEST_CASE("cross-prompt negatives") {
  const Dataset ds = small_dataset({5, 50, 50});
  Rng rng(1);
  const auto neg = sample_prompt_irrelevant(ds, 1, rng);
  CHECK(neg.size() == 5);
  for (const auto& e : neg) {
    CHECK(e.prompt_id == 1);
    CHECK(e.provenance == Provenance::prompt_irrelevant);
    CHECK(e.normalized_score == 0.0);
    CHECK(ds.essays[static_cast<std::size_t>(std::stoi(e.source_id.substr(1)))].prompt_id != 1);
  }
  Rng again(1);
  const auto neg2 = sample_prompt_irrelevant(ds, 1, again);
  for (std::size_t i = 0; i < neg.size(); ++i) CHECK(neg[i].id == neg2[i].id);

  const Dataset tiny = small_dataset({5, 3});
  Rng r2(2);
  CHECK(sample_prompt_irrelevant(tiny, 1, r2).size() == 5);
}

TEST_CASE("negatives per condition") {
  const Dataset ds = small_dataset({100, 100});
  Rng rng(3);
  auto count = [](const std::vector<Essay>& v, Provenance p) {
    return std::count_if(v.begin(), v.end(), [&](const Essay& e) { return e.provenance == p; });
  };
  const auto perm = make_negatives(ds.essays, Condition::permuted, rng);
  CHECK(perm.size() == 200);
  const auto irr = make_negatives(ds.essays, Condition::irrelevant, rng);
  CHECK(count(irr, Provenance::prompt_irrelevant) == 200);
  const auto mixed = make_negatives(ds.essays, Condition::mixed, rng);
  CHECK(count(mixed, Provenance::permuted) == 100);
  CHECK(count(mixed, Provenance::prompt_irrelevant) == 100);
  for (int pid : {1, 2}) {
    CHECK(std::count_if(mixed.begin(), mixed.end(), [&](const Essay& e) {
            return e.prompt_id == pid && e.provenance == Provenance::permuted;
          }) == 50);
  }
  CHECK(make_negatives(ds.essays, Condition::clean, rng).empty());
}

TEST_CASE("fold sizes") {
  Rng rng(5);
  const FoldSplit ten = make_folds(small_dataset({10}), 5, rng);
  for (int f = 0; f < 5; ++f) CHECK(ten.fold_size(f) == 2);
  const FoldSplit eleven = make_folds(small_dataset({11}), 5, rng);
  std::vector<std::size_t> sizes;
  for (int f = 0; f < 5; ++f) sizes.push_back(eleven.fold_size(f));
  std::sort(sizes.rbegin(), sizes.rend());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});
}

TEST_CASE("folds partition the originals with per-prompt balance") {
  const Dataset ds = small_dataset({23, 17, 31});
  Rng a(9), b(9);
  const FoldSplit s = make_folds(ds, 5, a);
  CHECK(s.assignment == make_folds(ds, 5, b).assignment);
  CHECK(s.assignment.size() == ds.essays.size());
  for (const auto& [pid, p] : ds.prompts) {
    std::vector<int> per(5);
    for (std::size_t i : ds.originals_of(pid)) ++per[static_cast<std::size_t>(s.assignment.at(ds.essays[i].id))];
    CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
  }
  std::stringstream io;
  write_folds(io, s);
  CHECK(read_folds(io).assignment == s.assignment);
}

TEST_CASE("dataset validation") {
  Dataset ds = small_dataset({3});
  ds.essays.push_back(ds.essays.front());
  CHECK_THROWS_AS(ds.validate(), Error);
}

}
