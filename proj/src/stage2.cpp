#include "aes/stage2.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "aes/error.hpp"
#include "aes/neural.hpp"

namespace aes {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& tok) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc() || p != tok.data() + tok.size()) fail(ErrorKind::format, "bad number '" + tok + "' in model");
  return x;
}

// Midpoint strictly above `lo` so that `lo` itself goes left under `x < thr`.
double split_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const StageTwoRow> rows, const std::vector<double>& g, const std::vector<double>& h,
              const BoostConfig& cfg)
      : rows_(rows), g_(g), h_(h), cfg_(cfg) {}

  RegressionTree build(std::vector<std::vector<int>> sorted) {
    tree_.nodes.clear();
    grow(std::move(sorted), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::vector<int>> sorted, int depth) {
    const auto& members = sorted.front();
    double G = 0.0, H = 0.0;
    for (int r : members) {
      G += g_[r];
      H += h_[r];
    }
    const int node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, -G / (H + cfg_.lambda)});
    if (depth >= cfg_.max_depth || members.size() < 2) return node;

    double best_gain = kMinSplitGain;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto& order = sorted[f];
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const int r = order[k];
        gl += g_[r];
        hl += h_[r];
        const double v = rows_[r].x[f];
        const double next = rows_[order[k + 1]].x[f];
        if (!(v < next)) continue;
        const double hr = H - hl;
        if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) continue;
        const double gain = split_gain(gl, hl, G - gl, hr, cfg_.lambda);
        if (gain > best_gain + kGainTieTolerance * best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = split_threshold(v, next);
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<std::vector<int>> left(sorted.size()), right(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      for (int r : sorted[f]) {
        (rows_[r].x[best_feature] < best_threshold ? left[f] : right[f]).push_back(r);
      }
    }
    sorted.clear();
    const int l = grow(std::move(left), depth + 1);
    const int rgt = grow(std::move(right), depth + 1);
    TreeNode& n = tree_.nodes[node];
    n.feature = best_feature;
    n.threshold = best_threshold;
    n.left = l;
    n.right = rgt;
    n.weight = 0.0;
    return node;
  }

  std::span<const StageTwoRow> rows_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const BoostConfig& cfg_;
  RegressionTree tree_;
};

void check_rows(std::span<const StageTwoRow> rows, std::size_t width, const char* what) {
  for (const auto& r : rows) {
    if (r.x.size() != width) fail(ErrorKind::dimension, std::string(what) + " rows have inconsistent widths");
    if (!(r.y >= 0.0 && r.y <= 1.0)) fail(ErrorKind::range, std::string(what) + " target outside [0, 1]");
  }
}

void write_node(std::ostream& out, const RegressionTree& tree, int idx) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
  if (n.is_leaf()) {
    out << "L " << fmt_double(n.weight) << '\n';
    return;
  }
  out << "I " << n.feature << ' ' << fmt_double(n.threshold) << '\n';
  write_node(out, tree, n.left);
  write_node(out, tree, n.right);
}

int read_node(std::istream& in, RegressionTree& tree, int feature_count, int depth) {
  if (depth > 64) fail(ErrorKind::format, "tree nesting too deep");
  std::string kind, tok;
  if (!(in >> kind)) fail(ErrorKind::format, "model file truncated inside a tree");
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (kind == "L") {
    if (!(in >> tok)) fail(ErrorKind::format, "leaf without weight");
    tree.nodes[idx].weight = parse_double(tok);
    return idx;
  }
  if (kind != "I") fail(ErrorKind::format, "unknown node tag '" + kind + "'");
  int feature = -1;
  if (!(in >> feature >> tok) || feature < 0 || feature >= feature_count) {
    fail(ErrorKind::format, "bad internal node");
  }
  tree.nodes[idx].feature = feature;
  tree.nodes[idx].threshold = parse_double(tok);
  const int l = read_node(in, tree, feature_count, depth + 1);
  const int r = read_node(in, tree, feature_count, depth + 1);
  tree.nodes[idx].left = l;
  tree.nodes[idx].right = r;
  return idx;
}

}  // namespace

std::string_view to_string(FusionMode mode) { return mode == FusionMode::clean ? "clean" : "adversarial"; }

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "clean") return FusionMode::clean;
  if (text == "adversarial") return FusionMode::adversarial;
  fail(ErrorKind::configuration, "unknown mode '" + std::string(text) + "' (expected clean or adversarial)");
}

std::vector<double> assemble_input(const FeatureVector& f, const ScoreTriple& t, FusionMode mode) {
  const auto v = f.values();
  std::vector<double> x(v.begin(), v.end());
  x.push_back(t.semantic);
  if (mode == FusionMode::adversarial) {
    x.push_back(t.coherence);
    x.push_back(t.relevance);
  }
  return x;
}

std::vector<std::string> input_names(FusionMode mode) {
  std::vector<std::string> names;
  for (auto n : FeatureVector::names()) names.emplace_back(n);
  names.emplace_back("semantic");
  if (mode == FusionMode::adversarial) {
    names.emplace_back("coherence");
    names.emplace_back("relevance");
  }
  return names;
}

double RegressionTree::predict(std::span<const double> x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    idx = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].weight;
}

int RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [idx, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return deepest;
}

void BoostConfig::validate() const {
  if (!(learning_rate > 0.0) || max_depth < 0 || early_stopping_rounds < 1 || max_rounds < 0 || !(lambda > 0.0) ||
      min_child_weight < 0.0) {
    fail(ErrorKind::configuration, "boosting parameters out of range");
  }
}

double GbdtModel::predict_margin(std::span<const double> x) const {
  double raw = base_score;
  for (const auto& t : trees) raw += learning_rate * t.predict(x);
  return raw;
}

double logistic_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) fail(ErrorKind::dimension, "probability and target lists differ in length");
  if (p.empty()) return 0.0;
  constexpr double lo = 1e-15;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], lo, 1.0 - lo);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

double split_gain(double gl, double hl, double gr, double hr, double lambda) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
}

GbdtTrainResult train_gbdt(std::span<const StageTwoRow> train, std::span<const StageTwoRow> valid,
                           const BoostConfig& cfg) {
  cfg.validate();
  if (train.empty()) fail(ErrorKind::empty_input, "boosting needs at least one training row");
  const std::size_t width = train.front().x.size();
  check_rows(train, width, "training");
  check_rows(valid, width, "validation");

  GbdtTrainResult result;
  GbdtModel& model = result.model;
  model.learning_rate = cfg.learning_rate;
  model.feature_count = static_cast<int>(width);

  const std::size_t n = train.size();
  std::vector<double> y(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = train[i].y;
    mean += y[i];
  }
  mean /= static_cast<double>(n);
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double clamped_mean = std::clamp(mean, 1e-12, 1.0 - 1e-12);
  model.base_score = std::clamp(std::log(clamped_mean / (1.0 - clamped_mean)), -10.0, 10.0);

  std::vector<double> vy(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) vy[i] = valid[i].y;

  std::vector<double> margin(n, model.base_score), vmargin(valid.size(), model.base_score);
  std::vector<double> prob(n), vprob(valid.size());
  auto losses = [&] {
    for (std::size_t i = 0; i < n; ++i) prob[i] = nn::sigmoid(margin[i]);
    for (std::size_t i = 0; i < valid.size(); ++i) vprob[i] = nn::sigmoid(vmargin[i]);
    result.train_loss.push_back(logistic_loss(prob, y));
    result.valid_loss.push_back(valid.empty() ? result.train_loss.back() : logistic_loss(vprob, vy));
  };
  losses();
  if (*ymin == *ymax) return result;  // constant target: the base score is optimal

  std::vector<std::vector<int>> presorted(width, std::vector<int>(n));
  for (std::size_t f = 0; f < width; ++f) {
    auto& order = presorted[f];
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return train[a].x[f] < train[b].x[f]; });
  }

  std::vector<double> g(n), h(n);
  double best_loss = result.valid_loss.back();
  int best_round = 0;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = prob[i] - y[i];
      h[i] = prob[i] * (1.0 - prob[i]);
    }
    TreeBuilder builder(train, g, h, cfg);
    RegressionTree tree = builder.build(presorted);
    for (std::size_t i = 0; i < n; ++i) margin[i] += cfg.learning_rate * tree.predict(train[i].x);
    for (std::size_t i = 0; i < valid.size(); ++i) vmargin[i] += cfg.learning_rate * tree.predict(valid[i].x);
    model.trees.push_back(std::move(tree));
    losses();
    const double loss = result.valid_loss.back();
    if (loss < best_loss - 1e-7) {
      best_loss = loss;
      best_round = round;
    } else if (round - best_round >= cfg.early_stopping_rounds) {
      break;
    }
  }
  model.trees.resize(static_cast<std::size_t>(best_round));
  result.best_rounds = best_round;
  return result;
}

double predict_gbdt(const GbdtModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.feature_count) {
    fail(ErrorKind::dimension, "input has " + std::to_string(x.size()) + " features, model expects " +
                                   std::to_string(model.feature_count));
  }
  return nn::sigmoid(model.predict_margin(x));
}

void save_gbdt(std::ostream& out, const GbdtModel& model) {
  out << "aes-gbdt 1\n";
  out << "n_trees " << model.trees.size() << '\n';
  out << "learning_rate " << fmt_double(model.learning_rate) << '\n';
  out << "base_score " << fmt_double(model.base_score) << '\n';
  out << "feature_count " << model.feature_count << '\n';
  out << "mode " << model.mode << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    out << "tree " << t << ' ' << model.trees[t].nodes.size() << '\n';
    write_node(out, model.trees[t], 0);
  }
}

GbdtModel load_gbdt(std::istream& in) {
  auto expect = [&](const char* word) {
    std::string tok;
    if (!(in >> tok) || tok != word) fail(ErrorKind::format, std::string("model file: expected '") + word + "'");
  };
  std::string tok;
  GbdtModel m;
  expect("aes-gbdt");
  int version = 0;
  if (!(in >> version) || version != 1) fail(ErrorKind::format, "unsupported boosting-model version");
  std::size_t n_trees = 0;
  expect("n_trees");
  in >> n_trees;
  expect("learning_rate");
  in >> tok;
  m.learning_rate = parse_double(tok);
  expect("base_score");
  in >> tok;
  m.base_score = parse_double(tok);
  expect("feature_count");
  in >> m.feature_count;
  expect("mode");
  in >> m.mode;
  if (!in || m.feature_count < 1) fail(ErrorKind::format, "boosting-model header is malformed");
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::size_t idx = 0, count = 0;
    expect("tree");
    if (!(in >> idx >> count) || idx != t) fail(ErrorKind::format, "tree header out of order");
    RegressionTree tree;
    read_node(in, tree, m.feature_count, 0);
    if (tree.nodes.size() != count) fail(ErrorKind::format, "tree " + std::to_string(t) + " node count mismatch");
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace aes
