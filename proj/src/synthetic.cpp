#include "aes/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "aes/error.hpp"

namespace aes {

namespace {

using WordList = std::vector<std::string>;

const std::array<WordList, 8>& topic_words() {
  static const std::array<WordList, 8> topics = {{
      {"computers", "technology", "internet", "online", "screen", "software", "devices", "email",
       "websites", "keyboard", "digital", "network", "laptop", "games", "chat", "friends"},
      {"library", "books", "censorship", "shelves", "librarian", "offensive", "readers", "magazines",
       "authors", "removed", "banned", "novels", "patrons", "literature", "catalog", "reading"},
      {"cyclist", "road", "desert", "heat", "water", "bicycle", "hills", "thirst",
       "journey", "sun", "pedaling", "rattlesnake", "town", "map", "terrain", "exhaustion"},
      {"garden", "winter", "geese", "hibiscus", "spring", "flowers", "budding", "snow",
       "planting", "seasons", "soil", "blooming", "frost", "petals", "seeds", "greenhouse"},
      {"memoir", "family", "kitchen", "parents", "cuban", "home", "traditions", "neighbors",
       "music", "cooking", "gratitude", "childhood", "warmth", "heritage", "rooms", "community"},
      {"dirigible", "mast", "building", "builders", "airship", "mooring", "winds", "helium",
       "skyscraper", "engineers", "docking", "steel", "frame", "landing", "obstacles", "empire"},
      {"patience", "waiting", "line", "calm", "temper", "tolerant", "understanding", "delay",
       "frustration", "wait", "moment", "quiet", "restraint", "composure", "time", "pause"},
      {"laughter", "humor", "jokes", "smile", "friendship", "funny", "giggling", "story",
       "relationship", "cheerful", "comedy", "amusing", "grin", "playful", "silly", "tease"},
  }};
  return topics;
}

const WordList kFunction = {"the", "a", "of", "to", "and", "in", "is", "it", "for", "with",
                            "on", "this", "we", "they", "are", "be", "can", "many", "some", "our"};
const WordList kBasic = {"good", "bad", "thing", "stuff", "very", "really", "lot", "nice", "big", "like",
                         "think", "people", "get", "make", "fun", "kind", "okay", "pretty", "go", "say"};
const WordList kAdvanced = {"consequently", "significant", "demonstrate", "perspective", "substantial",
                            "nevertheless", "comprehensive", "fundamental", "illustrate", "profound",
                            "meticulous", "articulate", "inevitably", "considerable", "predominantly",
                            "analysis", "emphasize", "remarkable", "diverse", "intricate"};
const WordList kIntro = {"introduction", "begin", "opening", "believe", "opinion", "introduce", "initially",
                         "start"};
const WordList kBody = {"first", "second", "next", "also", "moreover", "example", "another", "additionally"};
const WordList kConclusion = {"conclusion", "summary", "overall", "finally", "therefore", "ultimately",
                              "summarize", "closing"};
const WordList kMarkers = {"because", "which", "although", "when", "since", "that"};

const std::string& pick(const WordList& words, Rng& rng) { return words[rng.uniform_index(words.size())]; }

std::string misspell(const std::string& word, Rng& rng) {
  std::string w = word;
  const std::size_t i = rng.uniform_index(w.size());
  switch (rng.uniform_index(3)) {
    case 0: w.insert(i, 1, w[i]); break;                            // doubled letter
    case 1: if (w.size() > 3) w.erase(i, 1); else w += 'x'; break;  // dropped letter
    default: w += "q"; break;
  }
  return w;
}

std::string to_sentence(const std::vector<std::string>& words, char terminal = '.') {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += terminal;
  return s;
}

// Role words (intro/body/conclusion) sit at the front and make up roughly half
// of the sentence, so the role survives averaging into a sentence vector.
std::string make_sentence(const WordList& role, int length, double quality, const WordList& topic, Rng& rng,
                          bool allow_clause) {
  std::vector<std::string> words;
  const int n_role = std::max(2, length / 2);
  for (int i = 0; i < n_role; ++i) words.push_back(pick(role, rng));
  while (static_cast<int>(words.size()) < length) {
    const double u = rng.uniform01();
    std::string w;
    if (u < 0.55) {
      w = pick(topic, rng);
    } else if (u < 0.70) {
      w = pick(kFunction, rng);
    } else {
      w = rng.bernoulli(0.1 + 0.8 * quality) ? pick(kAdvanced, rng) : pick(kBasic, rng);
    }
    if (rng.bernoulli(0.25 * (1.0 - quality))) w = misspell(w, rng);
    words.push_back(std::move(w));
    if (allow_clause && rng.bernoulli(0.08 * quality)) words.push_back(pick(kMarkers, rng));
  }
  return to_sentence(words);
}

std::string make_prompt_text(const WordList& topic, Rng& rng) {
  std::string text;
  for (int s = 0; s < 3; ++s) {
    std::vector<std::string> words;
    for (int i = 0; i < 8; ++i) words.push_back(rng.bernoulli(0.7) ? pick(topic, rng) : pick(kFunction, rng));
    if (!text.empty()) text += ' ';
    text += to_sentence(words);
  }
  return text;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.prompts < 2 || cfg.prompts > 8) fail(ErrorKind::configuration, "synthetic corpus needs 2-8 prompts");
  if (cfg.essays_per_prompt < 1) fail(ErrorKind::configuration, "synthetic corpus needs essays");
  Rng rng(cfg.seed);
  SyntheticCorpus out;
  const auto& ranges = asap_score_ranges();
  for (int pid = 1; pid <= cfg.prompts; ++pid) {
    Prompt p{pid, ranges.at(pid), {}, {}};
    attach_prompt_text(p, make_prompt_text(topic_words()[static_cast<std::size_t>(pid - 1)], rng));
    out.dataset.prompts[pid] = std::move(p);
  }
  int next_id = 1;
  for (int pid = 1; pid <= cfg.prompts; ++pid) {
    const Prompt& prompt = out.dataset.prompts.at(pid);
    const WordList& topic = topic_words()[static_cast<std::size_t>(pid - 1)];
    for (int k = 0; k < cfg.essays_per_prompt; ++k) {
      const double q = rng.uniform01();
      const int n_sent = std::clamp(static_cast<int>(std::lround(3 + 7 * q + rng.normal())), 3, 12);
      std::string text;
      for (int s = 0; s < n_sent; ++s) {
        const int len = std::clamp(static_cast<int>(std::lround(6 + 8 * q + 1.5 * rng.normal())), 4, 22);
        const WordList& role = s == 0 ? kIntro : (s + 1 == n_sent ? kConclusion : kBody);
        if (!text.empty()) text += ' ';
        text += make_sentence(role, len, q, topic, rng, s > 0 && s + 1 < n_sent);
      }
      const double g = std::clamp(q + cfg.score_noise * rng.normal(), 0.0, 1.0);
      const int score = static_cast<int>(std::lround(prompt.range.min + g * (prompt.range.max - prompt.range.min)));
      out.dataset.essays.push_back(make_essay(std::to_string(next_id++), prompt, text, score));
    }
  }
  std::set<std::string> dict;
  for (const auto* list : {&kFunction, &kBasic, &kAdvanced, &kIntro, &kBody, &kConclusion, &kMarkers}) {
    dict.insert(list->begin(), list->end());
  }
  for (const auto& t : topic_words()) dict.insert(t.begin(), t.end());
  out.dictionary.assign(dict.begin(), dict.end());
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream tsv(dir / "essays.tsv");
    if (!tsv) fail(ErrorKind::io, "cannot write " + (dir / "essays.tsv").string());
    tsv << "essay_id\tessay_set\tessay\tdomain1_score\n";
    for (const auto& e : corpus.dataset.essays) {
      tsv << e.id << '\t' << e.prompt_id << '\t' << e.raw_text << '\t' << e.gold_score << '\n';
    }
  }
  for (const auto& [pid, p] : corpus.dataset.prompts) {
    std::ofstream out(dir / ("prompt_" + std::to_string(pid) + ".txt"));
    for (std::size_t i = 0; i < p.sentence_text.size(); ++i) out << (i ? " " : "") << p.sentence_text[i];
    out << '\n';
  }
  std::ofstream words(dir / "words.txt");
  for (const auto& w : corpus.dictionary) words << w << '\n';
}

}  // namespace aes
