#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aes/features.hpp"

namespace aes {

struct ScoreTriple {
  double semantic = 0.5;
  double coherence = 0.5;
  double relevance = 0.5;
};

// clean: [9 features, S_e]; adversarial: [9 features, S_e, C_e, P_e].
enum class FusionMode { clean, adversarial };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

std::vector<double> assemble_input(const FeatureVector& f, const ScoreTriple& t, FusionMode mode);
std::vector<std::string> input_names(FusionMode mode);

struct StageTwoRow {
  std::vector<double> x;
  double y = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;  // rows with x[feature] < threshold
  int right = -1;
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
};

struct BoostConfig {
  double learning_rate = 0.001;
  int max_depth = 6;
  int early_stopping_rounds = 100;
  int max_rounds = 5000;
  double lambda = 1.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GbdtModel {
  std::vector<RegressionTree> trees;
  double learning_rate = 0.001;
  double base_score = 0.0;  // raw margin before any tree
  int feature_count = 0;
  std::string mode = "clean";

  double predict_margin(std::span<const double> x) const;
};

struct GbdtTrainResult {
  GbdtModel model;
  // Loss after 0, 1, 2, ... rounds (index 0 is the base score alone).
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  int best_rounds = 0;
};

// Soft-label cross-entropy, probabilities clipped to [1e-15, 1 - 1e-15].
double logistic_loss(std::span<const double> probabilities, std::span<const double> targets);

// Gain of a split with the given child gradient/hessian sums.
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda);

// Splits below this gain are not made.
inline constexpr double kMinSplitGain = 1e-12;
// Gains within this relative distance count as tied; the earlier feature and
// then the lower threshold win. Mirror-image splits differ only by rounding.
inline constexpr double kGainTieTolerance = 1e-10;

GbdtTrainResult train_gbdt(std::span<const StageTwoRow> train, std::span<const StageTwoRow> valid,
                           const BoostConfig& cfg);

double predict_gbdt(const GbdtModel& model, std::span<const double> x);

void save_gbdt(std::ostream& out, const GbdtModel& model);
GbdtModel load_gbdt(std::istream& in);

}  // namespace aes
