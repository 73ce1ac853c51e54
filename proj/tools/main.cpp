#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "aes/config.hpp"
#include "aes/error.hpp"
#include "aes/eval.hpp"
#include "aes/synthetic.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace aes;
using aes::cli::Manifest;

namespace {

struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
};

struct Run {
  Config config;
  RunConfig rc;
  Manifest manifest;
};

Run load_run(const Common& common, const std::string& command) {
  Run run;
  for (const auto& f : common.config_files) run.config.merge_file(f);
  for (const auto& o : common.overrides) run.config.apply_override(o);
  run.rc = make_run_config(run.config);
  run.manifest.command = command;
  run.manifest.seed = run.rc.seed;
  run.manifest.config = run.config.snapshot();
  fs::create_directories(run.rc.output_dir);
  return run;
}

fs::path require_file(const std::optional<fs::path>& p, const std::string& key) {
  if (!p) fail(ErrorKind::configuration, key + " is not set");
  if (!fs::exists(*p)) fail(ErrorKind::io, key + ": " + p->string() + " does not exist");
  return *p;
}

std::string replace_id(std::string pattern, int id) {
  const auto at = pattern.find("{id}");
  if (at != std::string::npos) pattern.replace(at, 4, std::to_string(id));
  return pattern;
}

Dataset load_dataset(Run& run) {
  const RunConfig& rc = run.rc;
  AsapOptions opt = rc.asap;
  if (rc.score_ranges) {
    opt.ranges = load_score_ranges(require_file(rc.score_ranges, "data.score_ranges"));
    run.manifest.add_input(*rc.score_ranges);
  }
  const fs::path corpus = require_file(rc.corpus, "data.corpus");
  Dataset ds = load_asap_tsv(corpus, opt);
  run.manifest.add_input(corpus);
  if (rc.prompt_pattern) {
    load_prompt_texts(ds, *rc.prompt_pattern);
    for (const auto& [pid, p] : ds.prompts) {
      const fs::path f = replace_id(*rc.prompt_pattern, pid);
      if (fs::exists(f)) run.manifest.add_input(f);
    }
  }
  return ds;
}

ErrorCounter make_counter(Run& run) {
  switch (run.rc.errors) {
    case ErrorSource::dictionary: {
      const fs::path p = require_file(run.rc.dictionary, "data.dictionary");
      run.manifest.add_input(p);
      return ErrorCounter::dictionary(load_dictionary(p));
    }
    case ErrorSource::precomputed: {
      const fs::path p = require_file(run.rc.error_counts, "data.error_counts");
      run.manifest.add_input(p);
      return ErrorCounter::precomputed(load_error_counts(p));
    }
    case ErrorSource::none: return ErrorCounter::none();
  }
  return ErrorCounter::none();
}

std::unique_ptr<SentenceEmbedder> make_run_embedder(Run& run) {
  if (run.rc.embedder.mode == EmbedderMode::file) {
    run.manifest.add_input(require_file(run.rc.embeddings, "data.embeddings"));
  }
  return make_embedder(run.rc.embedder);
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) fail(ErrorKind::io, "cannot write " + p.string());
  return out;
}

void finish(Run& run) {
  run.manifest.save(cli::manifest_path(run.rc.output_dir, run.manifest.command));
}

std::string exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_exact(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) fail(ErrorKind::format, where + ": bad number '" + s + "'");
  return v;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

// Settings that change what stage one produces. A downstream stage refuses to
// run when any of them differs from the run that wrote its inputs.
bool affects_stage_one(const std::string& key) {
  return key.rfind("boost.", 0) != 0 && key.rfind("eval.", 0) != 0 && key != "pipeline.boost_valid_fraction";
}

void require_same_settings(const Manifest& upstream, const Run& run) {
  for (const auto& [key, value] : run.manifest.config) {
    if (!affects_stage_one(key)) continue;
    auto it = upstream.config.find(key);
    if (it == upstream.config.end() || it->second != value) {
      fail(ErrorKind::dependency, "setting " + key + " differs from the '" + upstream.command + "' run; rerun it");
    }
  }
  for (const auto& [key, value] : upstream.config) {
    if (affects_stage_one(key) && !run.manifest.config.count(key)) {
      fail(ErrorKind::dependency, "setting " + key + " differs from the '" + upstream.command + "' run; rerun it");
    }
  }
}

// ---------------------------------------------------------------- commands

int cmd_synth(const std::string& out_dir, std::uint64_t seed, int prompts, int essays) {
  SyntheticConfig sc;
  sc.seed = seed;
  sc.prompts = prompts;
  sc.essays_per_prompt = essays;
  write_synthetic_corpus(make_synthetic_corpus(sc), out_dir);
  std::cout << "wrote " << prompts * essays << " essays to " << out_dir << '\n';
  return 0;
}

int cmd_ingest(const Common& common) {
  Run run = load_run(common, "ingest");
  const Dataset ds = load_dataset(run);
  ds.validate();
  const fs::path summary = run.rc.output_dir / "ingest_summary.tsv";
  std::ofstream out = open_out(summary);
  std::printf("%-8s %8s %12s %8s %12s\n", "prompt", "essays", "avg words", "range", "prompt text");
  out << "prompt\tessays\tavg_words\tmin\tmax\tprompt_sentences\n";
  for (const auto& [pid, p] : ds.prompts) {
    const auto idx = ds.originals_of(pid);
    double words = 0.0;
    for (std::size_t i : idx) {
      for (const auto& s : ds.essays[i].sentences) words += static_cast<double>(s.size());
    }
    const double avg = idx.empty() ? 0.0 : words / static_cast<double>(idx.size());
    const std::string range = std::to_string(p.range.min) + "-" + std::to_string(p.range.max);
    std::printf("%-8d %8zu %12.1f %8s %12zu\n", pid, idx.size(), avg, range.c_str(), p.sentences.size());
    out << pid << '\t' << idx.size() << '\t' << fixed6(avg) << '\t' << p.range.min << '\t' << p.range.max << '\t'
        << p.sentences.size() << '\n';
  }
  out.close();
  run.manifest.add_output(summary);
  finish(run);
  return 0;
}

const char* kModelsIndex = "stage1/models.txt";

int cmd_train_stage1(const Common& common) {
  Run run = load_run(common, "train-stage1");
  const Dataset ds = load_dataset(run);
  const ErrorCounter counter = make_counter(run);
  const auto embedder = make_run_embedder(run);
  const fs::path out_dir = run.rc.output_dir;

  const StageOneFit fit = fit_stage_one(ds, run.rc.pipeline, *embedder, counter, run.rc.seed);

  std::ofstream index = open_out(out_dir / kModelsIndex);
  index << "mode " << to_string(run.rc.pipeline.mode) << '\n' << "members " << fit.members.size() << '\n';
  std::vector<fs::path> written;
  for (std::size_t j = 0; j < fit.members.size(); ++j) {
    for (const auto* m : {&fit.members[j].semantic, &fit.members[j].coherence, &fit.members[j].relevance}) {
      if (!*m) continue;
      const std::string name = "member" + std::to_string(j) + "." + std::string(to_string((*m)->kind)) + ".model";
      std::ofstream f = open_out(out_dir / "stage1" / name);
      save_model(f, **m);
      f.close();
      index << "member " << j << ' ' << to_string((*m)->kind) << ' ' << name << '\n';
      written.push_back(out_dir / "stage1" / name);
    }
  }
  index.close();
  written.push_back(out_dir / kModelsIndex);

  // Everything stage two needs, one row per training essay, at full precision.
  const StageTwoData& rows = fit.rows;
  std::ofstream tsv = open_out(out_dir / "stage2_rows.tsv");
  tsv << "essay_id\tprompt\tprovenance\ttarget";
  for (auto n : FeatureVector::names()) tsv << '\t' << n;
  tsv << "\tS_e\tC_e\tP_e\n";
  std::vector<std::pair<std::string, ScoreTriple>> triples;
  std::vector<std::pair<std::string, FeatureVector>> features;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Essay& e = rows.essays[i];
    tsv << e.id << '\t' << e.prompt_id << '\t' << to_string(e.provenance) << '\t' << exact(rows.targets[i]);
    for (double v : rows.features[i].values()) tsv << '\t' << exact(v);
    const ScoreTriple& t = rows.triples[i];
    tsv << '\t' << exact(t.semantic) << '\t' << exact(t.coherence) << '\t' << exact(t.relevance) << '\n';
    triples.emplace_back(e.id, t);
    features.emplace_back(e.id, rows.features[i]);
  }
  tsv.close();
  written.push_back(out_dir / "stage2_rows.tsv");
  {
    std::ofstream f = open_out(out_dir / "stage1_scores.tsv");
    write_stage_one_scores(f, triples);
  }
  {
    std::ofstream f = open_out(out_dir / "features.tsv");
    write_feature_dump(f, features);
  }
  written.push_back(out_dir / "stage1_scores.tsv");
  written.push_back(out_dir / "features.tsv");
  for (const auto& p : written) run.manifest.add_output(p);
  finish(run);
  std::cout << "stage one: " << fit.members.size() << " member(s), " << rows.size() << " stage-two rows\n";
  return 0;
}

StageTwoData read_stage_two_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::dependency, "missing " + path.string());
  StageTwoData data;
  std::string line;
  std::getline(in, line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 4 + FeatureVector::size + 3) fail(ErrorKind::format, where + ": wrong column count");
    Essay e;
    e.id = f[0];
    e.prompt_id = std::stoi(f[1]);
    data.essays.push_back(std::move(e));
    data.targets.push_back(parse_exact(f[3], where));
    FeatureVector fv;
    double* slots[] = {&fv.grammar_errors, &fv.essay_len_words, &fv.essay_len_chars,
                       &fv.word_len_mean,  &fv.word_len_var,    &fv.sent_len_mean,
                       &fv.sent_len_var,   &fv.clause_count,    &fv.vocab_size};
    for (std::size_t k = 0; k < FeatureVector::size; ++k) *slots[k] = parse_exact(f[4 + k], where);
    data.features.push_back(fv);
    const std::size_t s = 4 + FeatureVector::size;
    data.triples.push_back(ScoreTriple{parse_exact(f[s], where), parse_exact(f[s + 1], where),
                                       parse_exact(f[s + 2], where)});
  }
  return data;
}

int cmd_train_stage2(const Common& common) {
  Run run = load_run(common, "train-stage2");
  const fs::path out_dir = run.rc.output_dir;
  const Manifest upstream = cli::require_upstream(out_dir, "train-stage1");
  require_same_settings(upstream, run);
  const fs::path rows_path = out_dir / "stage2_rows.tsv";
  run.manifest.add_input(rows_path);
  const StageTwoData data = read_stage_two_rows(rows_path);
  const StageTwoModels models = fit_stage_two(data, run.rc.pipeline.mode, run.rc.pipeline.boost,
                                              run.rc.pipeline.boost_valid_fraction, run.rc.seed);
  for (const auto& [name, model] : {std::pair{"stage2/fused.gbdt", &models.fused},
                                    std::pair{"stage2/features.gbdt", &models.features_only}}) {
    std::ofstream f = open_out(out_dir / name);
    save_gbdt(f, *model);
    f.close();
    run.manifest.add_output(out_dir / name);
  }
  finish(run);
  std::cout << "stage two: fused " << models.fused.trees.size() << " trees, features-only "
            << models.features_only.trees.size() << " trees\n";
  return 0;
}

Pipeline load_pipeline(const fs::path& out_dir, Run& run) {
  const Manifest s1 = cli::require_upstream(out_dir, "train-stage1");
  const Manifest s2 = cli::require_upstream(out_dir, "train-stage2");
  require_same_settings(s1, run);
  Pipeline p;
  std::ifstream index(out_dir / kModelsIndex);
  std::string word, mode;
  std::size_t members = 0;
  if (!(index >> word >> mode) || word != "mode") fail(ErrorKind::format, "bad " + std::string(kModelsIndex));
  if (!(index >> word >> members) || word != "members") fail(ErrorKind::format, "bad " + std::string(kModelsIndex));
  p.mode = parse_fusion_mode(mode);
  p.stage_one.resize(members);
  std::size_t j = 0;
  std::string kind, name;
  while (index >> word >> j >> kind >> name) {
    if (word != "member" || j >= members) fail(ErrorKind::format, "bad " + std::string(kModelsIndex));
    std::ifstream f(out_dir / "stage1" / name);
    if (!f) fail(ErrorKind::dependency, "missing stage-one model " + name);
    ScoringModel m = load_model(f);
    auto& slot = m.kind == ScorerKind::semantic    ? p.stage_one[j].semantic
                 : m.kind == ScorerKind::coherence ? p.stage_one[j].coherence
                                                   : p.stage_one[j].relevance;
    slot = std::move(m);
  }
  for (const auto& [name, model] : {std::pair{"stage2/fused.gbdt", &p.stage_two.fused},
                                    std::pair{"stage2/features.gbdt", &p.stage_two.features_only}}) {
    std::ifstream f(out_dir / name);
    *model = load_gbdt(f);
  }
  for (const auto& [path, hash] : s1.outputs) run.manifest.inputs[path] = hash;
  for (const auto& [path, hash] : s2.outputs) run.manifest.inputs[path] = hash;
  return p;
}

int cmd_score(const Common& common, const std::string& essay_file, int prompt_id, const std::string& essay_id,
              const std::string& output) {
  Run run = load_run(common, "score");
  const fs::path out_dir = run.rc.output_dir;
  const Pipeline pipeline = load_pipeline(out_dir, run);
  const ErrorCounter counter = make_counter(run);
  const auto embedder = make_run_embedder(run);

  Dataset ds = load_dataset(run);
  std::vector<Essay> essays;
  if (!essay_file.empty()) {
    if (!fs::exists(essay_file)) fail(ErrorKind::io, essay_file + " does not exist");
    std::ifstream in(essay_file);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const Prompt& prompt = ds.prompt(prompt_id);
    const std::string id = essay_id.empty() ? fs::path(essay_file).stem().string() : essay_id;
    essays.push_back(make_essay(id, prompt, text, prompt.range.min));
    run.manifest.add_input(essay_file);
  } else {
    essays = ds.essays;
  }

  const fs::path out_path = output.empty() ? out_dir / "scores.tsv" : fs::path(output);
  std::ofstream out = open_out(out_path);
  SequenceCache cache(*embedder);
  for (const auto& e : essays) {
    const EssayScores s = score_with_pipeline(pipeline, e, ds.prompt(e.prompt_id), cache, counter);
    const std::string line = e.id + '\t' + fixed6(s.fused) + '\t' + std::to_string(to_bin(std::clamp(s.fused, 0.0, 1.0)));
    out << line << '\n';
    if (!essay_file.empty()) std::cout << line << '\n';
  }
  out.close();
  run.manifest.add_output(out_path);
  finish(run);
  return 0;
}

int write_eval(Run& run, const CvResult& result, const std::string& stem) {
  const fs::path report = run.rc.output_dir / (stem + "_report.txt");
  const fs::path preds = run.rc.output_dir / (stem + "_predictions.tsv");
  {
    std::ofstream out = open_out(report);
    write_report(out, result);
  }
  {
    std::ofstream out = open_out(preds);
    write_predictions(out, result);
  }
  write_report(std::cout, result);
  run.manifest.add_output(report);
  run.manifest.add_output(preds);
  finish(run);
  return 0;
}

int cmd_cv(const Common& common) {
  Run run = load_run(common, "cv");
  const Dataset ds = load_dataset(run);
  const ErrorCounter counter = make_counter(run);
  const auto embedder = make_run_embedder(run);
  const CvResult r = cross_validate(ds, run.rc.folds, run.rc.pipeline, *embedder, counter, run.rc.seed);
  return write_eval(run, r, "cv");
}

int cmd_adversarial(const Common& common) {
  Run run = load_run(common, "adversarial");
  const Dataset ds = load_dataset(run);
  const ErrorCounter counter = make_counter(run);
  const auto embedder = make_run_embedder(run);
  const CvResult r =
      adversarial_eval(ds, run.rc.condition, run.rc.folds, run.rc.pipeline, *embedder, counter, run.rc.seed);
  std::string stem = "adversarial_" + std::string(to_string(run.rc.condition));
  std::replace(stem.begin(), stem.end(), '+', '_');
  return write_eval(run, r, stem);
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::range:
    case ErrorKind::dimension:
    case ErrorKind::empty_input: return 1;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage essay scoring: training, scoring and evaluation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_files, "settings file; later files override earlier ones");
    sub->add_option("-s,--set", common.overrides, "section.key=value override, applied after all files");
  };

  std::string synth_out;
  std::uint64_t synth_seed = 0;
  int synth_prompts = 3, synth_essays = 200;
  auto* synth = app.add_subcommand("synth", "write the synthetic corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed")->required();
  synth->add_option("--prompts", synth_prompts, "number of prompts (2-8)");
  synth->add_option("--essays", synth_essays, "essays per prompt");

  auto* ingest = app.add_subcommand("ingest", "parse the corpus and summarize it per prompt");
  auto* stage1 = app.add_subcommand("train-stage1", "train the stage-one scorers and write stage-two rows");
  auto* stage2 = app.add_subcommand("train-stage2", "train the boosted fusion models");
  auto* score = app.add_subcommand("score", "score essays with trained models");
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation on clean data");
  auto* adv = app.add_subcommand("adversarial", "k-fold evaluation with adversarial essays");
  for (auto* sub : {ingest, stage1, stage2, score, cv, adv}) add_common(sub);

  std::string essay_file, essay_id, score_output;
  int prompt_id = 0;
  score->add_option("--essay", essay_file, "plain-text essay; default scores the configured corpus");
  score->add_option("--prompt", prompt_id, "prompt id of --essay");
  score->add_option("--id", essay_id, "essay id for --essay (default: file stem)");
  score->add_option("--output", score_output, "score file (default: <output>/scores.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_seed, synth_prompts, synth_essays);
    if (*ingest) return cmd_ingest(common);
    if (*stage1) return cmd_train_stage1(common);
    if (*stage2) return cmd_train_stage2(common);
    if (*score) {
      if (!essay_file.empty() && prompt_id == 0) fail(ErrorKind::configuration, "--essay needs --prompt");
      return cmd_score(common, essay_file, prompt_id, essay_id, score_output);
    }
    if (*cv) return cmd_cv(common);
    if (*adv) return cmd_adversarial(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
