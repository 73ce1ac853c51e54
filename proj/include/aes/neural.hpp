#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "aes/rng.hpp"

namespace aes::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Pooling { last, mean };
// The candidate state uses a sigmoid by default; tanh is the conventional LSTM.
enum class CandidateActivation { sigmoid, tanh };

struct NetConfig {
  int input_dim = 32;
  int hidden_size = 16;
  Pooling pooling = Pooling::last;
  CandidateActivation candidate = CandidateActivation::sigmoid;
  double dropout = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gate blocks are stacked row-wise in this order inside W, U and b.
enum class Gate { input = 0, forget = 1, candidate = 2, output = 3 };

struct LstmParams {
  Matrix W;  // 4h x d
  Matrix U;  // 4h x h
  Vector b;  // 4h

  static LstmParams zeros(int input_dim, int hidden_size);

  int input_dim() const { return static_cast<int>(W.cols()); }
  int hidden_size() const { return static_cast<int>(U.cols()); }

  auto W_gate(Gate g) { return W.middleRows(static_cast<int>(g) * hidden_size(), hidden_size()); }
  auto W_gate(Gate g) const { return W.middleRows(static_cast<int>(g) * hidden_size(), hidden_size()); }
  auto U_gate(Gate g) { return U.middleRows(static_cast<int>(g) * hidden_size(), hidden_size()); }
  auto U_gate(Gate g) const { return U.middleRows(static_cast<int>(g) * hidden_size(), hidden_size()); }
  auto b_gate(Gate g) { return b.segment(static_cast<int>(g) * hidden_size(), hidden_size()); }
  auto b_gate(Gate g) const { return b.segment(static_cast<int>(g) * hidden_size(), hidden_size()); }
};

struct DenseHead {
  Vector w;
  double b = 0.0;
};

// Everything trainable in one scorer. Also used as the gradient container.
struct NetParams {
  LstmParams lstm;
  DenseHead head;

  static NetParams zeros(int input_dim, int hidden_size);
};

// Flat views over every tensor, in a fixed order (W, U, b, head.w, head.b).
std::vector<std::span<double>> tensors(NetParams& p);
std::vector<std::span<const double>> tensors(const NetParams& p);
std::size_t parameter_count(const NetParams& p);

double sigmoid(double x);

struct StepState {
  Vector h, c;
  Vector i, f, g, o;  // gate activations; g is the candidate state
};

StepState lstm_step(const LstmParams& p, CandidateActivation act, const Vector& x, const Vector& h_prev,
                    const Vector& c_prev);

// h_0 = c_0 = 0; returns h_1..h_T for the columns of `xs`.
std::vector<Vector> lstm_forward(const LstmParams& p, CandidateActivation act, const Matrix& xs);

Vector pool_representation(std::span<const Vector> hidden, Pooling mode);

double head_score(const DenseHead& head, const Vector& r);

double mse_loss(std::span<const double> preds, std::span<const double> golds);

// Inverted dropout mask: entries are 0 or 1/(1-p).
Vector dropout_mask(Eigen::Index n, double p, Rng& rng);
Vector apply_dropout(const Vector& r, double p, Rng& rng, bool training);

struct Batch {
  std::vector<const Matrix*> inputs;
  std::vector<double> targets;
  // One mask per example, or empty for no dropout.
  std::vector<Vector> masks;

  std::size_t size() const { return inputs.size(); }
};

struct BatchResult {
  double loss = 0.0;
  std::vector<double> predictions;
};

// Batch MSE and, when `grads` is non-null, its exact gradient through the
// dense head, pooling and the unrolled recurrence. `grads` is overwritten.
BatchResult forward_backward(const NetParams& params, const NetConfig& cfg, const Batch& batch,
                             NetParams* grads);

// Inference score (no dropout).
double predict(const NetParams& params, const NetConfig& cfg, const Matrix& xs);

double global_norm(const NetParams& grads);
// Rescales `grads` in place when its global norm exceeds `max_norm`; returns the pre-clip norm.
double clip_global_norm(NetParams& grads, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
};

struct AdamState {
  AdamConfig cfg;
  NetParams m;
  NetParams v;
  long step = 0;

  static AdamState for_params(const NetParams& params, AdamConfig cfg = {});
};

// Bias-corrected Adam on flat buffers; `step` is the already-incremented t.
void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long step, const AdamConfig& cfg);

void adam_update(AdamState& state, NetParams& params, const NetParams& grads);

// Uniform Glorot weights per gate block, zero biases.
NetParams init_params(const NetConfig& cfg, Rng& rng);

struct ScoringNet {
  NetConfig cfg;
  NetParams params;

  double score(const Matrix& xs) const { return predict(params, cfg, xs); }
};

void save_net(std::ostream& out, const ScoringNet& net);
ScoringNet load_net(std::istream& in);

}  // namespace aes::nn
