#include "aes/neural.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "aes/error.hpp"

namespace aes::nn {

namespace {

// Beyond this the sigmoid rounds to exactly 0 or 1 in double precision.
constexpr double kLogitClamp = 30.0;

double activate_candidate(double x, CandidateActivation act) {
  return act == CandidateActivation::sigmoid ? sigmoid(x) : std::tanh(x);
}

double candidate_derivative(double g, CandidateActivation act) {
  return act == CandidateActivation::sigmoid ? g * (1.0 - g) : 1.0 - g * g;
}

void check_shapes(const LstmParams& p, Eigen::Index x_rows) {
  const Eigen::Index h = p.U.cols();
  if (p.U.rows() != 4 * h || p.W.rows() != 4 * h || p.b.size() != 4 * h) {
    fail(ErrorKind::dimension, "LSTM parameter blocks are inconsistent");
  }
  if (x_rows != p.W.cols()) {
    fail(ErrorKind::dimension, "input has dimension " + std::to_string(x_rows) + ", expected " +
                                   std::to_string(p.W.cols()));
  }
}

struct Forward {
  std::vector<StepState> steps;
  Vector pooled;
  Vector dropped;
  double logit = 0.0;
  double prediction = 0.0;
};

Forward run_forward(const NetParams& params, const NetConfig& cfg, const Matrix& xs, const Vector* mask) {
  if (xs.cols() == 0) fail(ErrorKind::empty_input, "cannot score an empty sequence");
  check_shapes(params.lstm, xs.rows());
  Forward f;
  const Eigen::Index h = params.lstm.hidden_size();
  Vector h_prev = Vector::Zero(h);
  Vector c_prev = Vector::Zero(h);
  f.steps.reserve(static_cast<std::size_t>(xs.cols()));
  for (Eigen::Index t = 0; t < xs.cols(); ++t) {
    f.steps.push_back(lstm_step(params.lstm, cfg.candidate, xs.col(t), h_prev, c_prev));
    h_prev = f.steps.back().h;
    c_prev = f.steps.back().c;
  }
  if (cfg.pooling == Pooling::last) {
    f.pooled = f.steps.back().h;
  } else {
    f.pooled = Vector::Zero(h);
    for (const auto& s : f.steps) f.pooled += s.h;
    f.pooled /= static_cast<double>(f.steps.size());
  }
  f.dropped = mask ? Vector(f.pooled.cwiseProduct(*mask)) : f.pooled;
  f.logit = params.head.w.dot(f.dropped) + params.head.b;
  f.prediction = sigmoid(std::clamp(f.logit, -kLogitClamp, kLogitClamp));
  return f;
}

void write_values(std::ostream& out, const double* data, Eigen::Index n) {
  char buf[64];
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, data[i]);
    if (i) out << ' ';
    out.write(buf, p - buf);
  }
  out << '\n';
}

double read_value(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) fail(ErrorKind::format, "model file truncated");
  double x = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc() || p != tok.data() + tok.size()) fail(ErrorKind::format, "bad number '" + tok + "' in model");
  return x;
}

void expect_word(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word) fail(ErrorKind::format, "model file: expected '" + word + "', found '" + tok + "'");
}

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  for (Eigen::Index r = 0; r < rm.rows(); ++r) write_values(out, rm.row(r).data(), rm.cols());
}

Matrix read_matrix(std::istream& in, const char* name, Eigen::Index rows, Eigen::Index cols) {
  expect_word(in, name);
  Eigen::Index r = 0, c = 0;
  if (!(in >> r >> c) || r != rows || c != cols) fail(ErrorKind::format, std::string("model file: bad shape for ") + name);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_value(in);
  return m;
}

}  // namespace

void NetConfig::validate() const {
  if (input_dim < 1 || hidden_size < 1) fail(ErrorKind::configuration, "network dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::configuration, "dropout must lie in [0, 1)");
}

LstmParams LstmParams::zeros(int d, int h) {
  return LstmParams{Matrix::Zero(4 * h, d), Matrix::Zero(4 * h, h), Vector::Zero(4 * h)};
}

NetParams NetParams::zeros(int d, int h) { return NetParams{LstmParams::zeros(d, h), DenseHead{Vector::Zero(h), 0.0}}; }

std::vector<std::span<double>> tensors(NetParams& p) {
  return {
      {p.lstm.W.data(), static_cast<std::size_t>(p.lstm.W.size())},
      {p.lstm.U.data(), static_cast<std::size_t>(p.lstm.U.size())},
      {p.lstm.b.data(), static_cast<std::size_t>(p.lstm.b.size())},
      {p.head.w.data(), static_cast<std::size_t>(p.head.w.size())},
      {&p.head.b, 1},
  };
}

std::vector<std::span<const double>> tensors(const NetParams& p) {
  auto spans = tensors(const_cast<NetParams&>(p));
  return {spans.begin(), spans.end()};
}

std::size_t parameter_count(const NetParams& p) {
  std::size_t n = 0;
  for (auto s : tensors(p)) n += s.size();
  return n;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

StepState lstm_step(const LstmParams& p, CandidateActivation act, const Vector& x, const Vector& h_prev,
                    const Vector& c_prev) {
  check_shapes(p, x.size());
  const Eigen::Index h = p.hidden_size();
  if (h_prev.size() != h || c_prev.size() != h) fail(ErrorKind::dimension, "recurrent state has wrong size");
  const Vector a = p.W * x + p.U * h_prev + p.b;
  StepState s;
  s.i = a.segment(0, h).unaryExpr([](double v) { return sigmoid(v); });
  s.f = a.segment(h, h).unaryExpr([](double v) { return sigmoid(v); });
  s.g = a.segment(2 * h, h).unaryExpr([act](double v) { return activate_candidate(v, act); });
  s.o = a.segment(3 * h, h).unaryExpr([](double v) { return sigmoid(v); });
  s.c = s.i.cwiseProduct(s.g) + s.f.cwiseProduct(c_prev);
  s.h = s.o.cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

std::vector<Vector> lstm_forward(const LstmParams& p, CandidateActivation act, const Matrix& xs) {
  if (xs.cols() == 0) fail(ErrorKind::empty_input, "LSTM input sequence is empty");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(xs.cols()));
  Vector h = Vector::Zero(p.hidden_size());
  Vector c = Vector::Zero(p.hidden_size());
  for (Eigen::Index t = 0; t < xs.cols(); ++t) {
    StepState s = lstm_step(p, act, xs.col(t), h, c);
    h = std::move(s.h);
    c = std::move(s.c);
    out.push_back(h);
  }
  return out;
}

Vector pool_representation(std::span<const Vector> hidden, Pooling mode) {
  if (hidden.empty()) fail(ErrorKind::empty_input, "cannot pool an empty hidden-state list");
  if (mode == Pooling::last) return hidden.back();
  Vector sum = Vector::Zero(hidden.front().size());
  for (const auto& v : hidden) sum += v;
  return sum / static_cast<double>(hidden.size());
}

double head_score(const DenseHead& head, const Vector& r) {
  if (head.w.size() != r.size()) fail(ErrorKind::dimension, "head weight and representation sizes differ");
  return sigmoid(std::clamp(head.w.dot(r) + head.b, -kLogitClamp, kLogitClamp));
}

double mse_loss(std::span<const double> preds, std::span<const double> golds) {
  if (preds.size() != golds.size()) fail(ErrorKind::dimension, "prediction and gold lists differ in length");
  if (preds.empty()) fail(ErrorKind::empty_input, "MSE of an empty list");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - golds[i]) * (preds[i] - golds[i]);
  return s / static_cast<double>(preds.size());
}

Vector dropout_mask(Eigen::Index n, double p, Rng& rng) {
  Vector mask(n);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < n; ++i) mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

Vector apply_dropout(const Vector& r, double p, Rng& rng, bool training) {
  if (!training || p == 0.0) return r;
  return r.cwiseProduct(dropout_mask(r.size(), p, rng));
}

BatchResult forward_backward(const NetParams& params, const NetConfig& cfg, const Batch& batch, NetParams* grads) {
  const std::size_t n = batch.size();
  if (n == 0) fail(ErrorKind::empty_input, "empty batch");
  if (batch.targets.size() != n || (!batch.masks.empty() && batch.masks.size() != n)) {
    fail(ErrorKind::dimension, "batch inputs, targets and masks differ in length");
  }
  const Eigen::Index h = params.lstm.hidden_size();
  if (grads) *grads = NetParams::zeros(params.lstm.input_dim(), static_cast<int>(h));

  BatchResult result;
  result.predictions.reserve(n);
  const double inv_n = 1.0 / static_cast<double>(n);

  Vector dh_next(h), dc_next(h), da(4 * h);
  for (std::size_t k = 0; k < n; ++k) {
    const Matrix& xs = *batch.inputs[k];
    const Vector* mask = batch.masks.empty() ? nullptr : &batch.masks[k];
    Forward f = run_forward(params, cfg, xs, mask);
    const double err = f.prediction - batch.targets[k];
    result.loss += err * err;
    result.predictions.push_back(f.prediction);
    if (!grads) continue;

    const bool saturated = std::abs(f.logit) > kLogitClamp;
    const double dz = saturated ? 0.0 : 2.0 * err * inv_n * f.prediction * (1.0 - f.prediction);
    grads->head.w += dz * f.dropped;
    grads->head.b += dz;
    Vector dr = dz * params.head.w;
    if (mask) dr = dr.cwiseProduct(*mask);

    const auto T = static_cast<Eigen::Index>(f.steps.size());
    dh_next.setZero();
    dc_next.setZero();
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const StepState& s = f.steps[static_cast<std::size_t>(t)];
      Vector dh = dh_next;
      if (cfg.pooling == Pooling::mean) {
        dh += dr / static_cast<double>(T);
      } else if (t == T - 1) {
        dh += dr;
      }
      const Vector tanh_c = s.c.array().tanh().matrix();
      const Vector c_prev = t > 0 ? f.steps[static_cast<std::size_t>(t - 1)].c : Vector::Zero(h);
      const Vector h_prev = t > 0 ? f.steps[static_cast<std::size_t>(t - 1)].h : Vector::Zero(h);

      const Vector dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
      da.segment(0, h) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      da.segment(h, h) = dc.cwiseProduct(c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      da.segment(2 * h, h) =
          dc.cwiseProduct(s.i).cwiseProduct(s.g.unaryExpr([&](double g) { return candidate_derivative(g, cfg.candidate); }));
      da.segment(3 * h, h) = dh.cwiseProduct(tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));

      grads->lstm.W.noalias() += da * xs.col(t).transpose();
      grads->lstm.U.noalias() += da * h_prev.transpose();
      grads->lstm.b += da;
      dh_next.noalias() = params.lstm.U.transpose() * da;
      dc_next = dc.cwiseProduct(s.f);
    }
  }
  result.loss *= inv_n;
  return result;
}

double predict(const NetParams& params, const NetConfig& cfg, const Matrix& xs) {
  return run_forward(params, cfg, xs, nullptr).prediction;
}

double global_norm(const NetParams& grads) {
  double s = 0.0;
  for (auto t : tensors(grads))
    for (double g : t) s += g * g;
  return std::sqrt(s);
}

double clip_global_norm(NetParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto t : tensors(grads))
      for (double& g : t) g *= scale;
  }
  return norm;
}

AdamState AdamState::for_params(const NetParams& params, AdamConfig cfg) {
  const int d = params.lstm.input_dim();
  const int h = params.lstm.hidden_size();
  return AdamState{cfg, NetParams::zeros(d, h), NetParams::zeros(d, h), 0};
}

void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long step, const AdamConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    fail(ErrorKind::dimension, "Adam buffers differ in size");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void adam_update(AdamState& state, NetParams& params, const NetParams& grads) {
  ++state.step;
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  if (p.size() != g.size()) fail(ErrorKind::dimension, "gradient layout differs from parameters");
  for (std::size_t k = 0; k < p.size(); ++k) adam_step(p[k], g[k], m[k], v[k], state.step, state.cfg);
}

NetParams init_params(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.input_dim;
  const int h = cfg.hidden_size;
  NetParams p = NetParams::zeros(d, h);
  auto fill = [&rng](auto&& block, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = rng.uniform(-limit, limit);
  };
  for (Gate g : {Gate::input, Gate::forget, Gate::candidate, Gate::output}) {
    fill(p.lstm.W_gate(g), d, h);
    fill(p.lstm.U_gate(g), h, h);
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(h + 1));
  for (Eigen::Index i = 0; i < h; ++i) p.head.w[i] = rng.uniform(-limit, limit);
  return p;
}

void save_net(std::ostream& out, const ScoringNet& net) {
  const auto& c = net.cfg;
  out << "aes-scoring-net 1\n";
  out << "input_dim " << c.input_dim << "\nhidden_size " << c.hidden_size << '\n';
  out << "pooling " << (c.pooling == Pooling::last ? "last" : "mean") << '\n';
  out << "candidate " << (c.candidate == CandidateActivation::sigmoid ? "sigmoid" : "tanh") << '\n';
  out << "dropout ";
  write_values(out, &c.dropout, 1);
  out << "seed " << c.seed << '\n';
  write_matrix(out, "W", net.params.lstm.W);
  write_matrix(out, "U", net.params.lstm.U);
  write_matrix(out, "b", net.params.lstm.b);
  write_matrix(out, "head_w", net.params.head.w);
  out << "head_b\n";
  write_values(out, &net.params.head.b, 1);
}

ScoringNet load_net(std::istream& in) {
  ScoringNet net;
  expect_word(in, "aes-scoring-net");
  int version = 0;
  if (!(in >> version) || version != 1) fail(ErrorKind::format, "unsupported scoring-net version");
  std::string word;
  expect_word(in, "input_dim");
  in >> net.cfg.input_dim;
  expect_word(in, "hidden_size");
  in >> net.cfg.hidden_size;
  expect_word(in, "pooling");
  in >> word;
  if (word != "last" && word != "mean") fail(ErrorKind::format, "unknown pooling '" + word + "'");
  net.cfg.pooling = word == "last" ? Pooling::last : Pooling::mean;
  expect_word(in, "candidate");
  in >> word;
  if (word != "sigmoid" && word != "tanh") fail(ErrorKind::format, "unknown candidate activation '" + word + "'");
  net.cfg.candidate = word == "sigmoid" ? CandidateActivation::sigmoid : CandidateActivation::tanh;
  expect_word(in, "dropout");
  net.cfg.dropout = read_value(in);
  expect_word(in, "seed");
  in >> net.cfg.seed;
  if (!in) fail(ErrorKind::format, "model header is malformed");
  net.cfg.validate();
  const int d = net.cfg.input_dim;
  const int h = net.cfg.hidden_size;
  net.params.lstm.W = read_matrix(in, "W", 4 * h, d);
  net.params.lstm.U = read_matrix(in, "U", 4 * h, h);
  net.params.lstm.b = read_matrix(in, "b", 4 * h, 1);
  net.params.head.w = read_matrix(in, "head_w", h, 1);
  expect_word(in, "head_b");
  net.params.head.b = read_value(in);
  return net;
}

}  // namespace aes::nn
