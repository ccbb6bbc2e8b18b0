// SPDX-License-Identifier: Apache-2.0
//
// Value network V(O_t): five per-component tuple embedders summed into e_n,
// strided 1-D convolutions for length reduction, a unidirectional LSTM, and
// a two-layer decoder with logistic output. Forward and reverse passes are
// written out by hand over a flat parameter vector.

#ifndef TDSMRP_MODEL_HPP
#define TDSMRP_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdsmrp/core.hpp"
#include "tdsmrp/parallel.hpp"
#include "tdsmrp/pipeline.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {

struct ConvStage {
  int kernel = 4;
  int stride = 2;
  int channels = 64;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct ModelConfig {
  int embed_dim = 32;
  std::vector<ConvStage> conv{{4, 2, 64}, {4, 2, 64}};
  int recurrent_hidden = 64;
  int decoder_hidden = 64;
  int feature_vocab = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& c) {
  if (c.embed_dim < 1 || c.recurrent_hidden < 1 || c.decoder_hidden < 1 || c.feature_vocab < 1)
    throw InvalidInput("model widths must be at least 1");
  for (const auto& s : c.conv)
    if (s.kernel < 1 || s.stride < 1 || s.channels < 1)
      throw InvalidInput("conv kernel, stride and channels must be at least 1");
}

/// Offsets of every parameter block inside the flat vector, in declaration
/// order: value and time embedders, feature table, delta embedders (each with
/// a no-history vector), conv stages, LSTM, decoder.
class ParameterLayout {
 public:
  struct Block {
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };
  struct ScalarEmbedder {
    Block w1, b1, w2, b2, no_history;  // no_history empty for value/time
  };
  struct Conv {
    Block w, b;
    int kernel, stride, in_channels, out_channels;
  };

  ParameterLayout() = default;
  explicit ParameterLayout(const ModelConfig& c) {
    validate(c);
    const Eigen::Index e = c.embed_dim;
    auto scalar = [&](bool with_no_history) {
      ScalarEmbedder s;
      s.w1 = take(e, 1);
      s.b1 = take(e, 1);
      s.w2 = take(e, e);
      s.b2 = take(e, 1);
      if (with_no_history) s.no_history = take(e, 1);
      return s;
    };
    value = scalar(false);
    time = scalar(false);
    feature_table = take(e, c.feature_vocab);
    delta_value = scalar(true);
    delta_time = scalar(true);
    int in = c.embed_dim;
    for (const auto& st : c.conv) {
      Conv cv;
      cv.w = take(st.channels, static_cast<Eigen::Index>(st.kernel) * in);
      cv.b = take(st.channels, 1);
      cv.kernel = st.kernel;
      cv.stride = st.stride;
      cv.in_channels = in;
      cv.out_channels = st.channels;
      conv.push_back(cv);
      in = st.channels;
    }
    const Eigen::Index h = c.recurrent_hidden;
    lstm_in = in;
    lstm_wx = take(4 * h, in);
    lstm_wh = take(4 * h, h);
    lstm_b = take(4 * h, 1);
    dec_w1 = take(c.decoder_hidden, h);
    dec_b1 = take(c.decoder_hidden, 1);
    dec_w2 = take(1, c.decoder_hidden);
    dec_b2 = take(1, 1);
  }

  Eigen::Index size() const { return size_; }

  ScalarEmbedder value, time, delta_value, delta_time;
  Block feature_table;
  std::vector<Conv> conv;
  int lstm_in = 0;
  Block lstm_wx, lstm_wh, lstm_b;
  Block dec_w1, dec_b1, dec_w2, dec_b2;

 private:
  Block take(Eigen::Index rows, Eigen::Index cols) {
    Block b{size_, rows, cols};
    size_ += rows * cols;
    return b;
  }
  Eigen::Index size_ = 0;
};

inline std::size_t parameter_count(const ModelConfig& c) {
  return static_cast<std::size_t>(ParameterLayout(c).size());
}

/// Output length of one conv stage after left padding to stride alignment.
inline Eigen::Index conv_output_length(Eigen::Index length, int kernel, int stride) {
  const Eigen::Index pad =
      length < kernel ? kernel - length : (stride - (length - kernel) % stride) % stride;
  return (length + pad - kernel) / stride + 1;
}

template <typename Scalar>
class ValueModel {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  /// Intermediate activations of one forward pass, kept for backward().
  struct Trace {
    Eigen::Index length = 0;
    Matrix inputs;  // 4 x L: v, t, dv, dt
    std::vector<int> features;
    std::vector<std::uint8_t> has_delta;
    Matrix hidden_pre[4];  // embedder first-layer pre-activations
    std::vector<Matrix> conv_in;   // padded input, column-major contiguous
    std::vector<Matrix> conv_pre;  // conv pre-activations
    Matrix lstm_x;                 // C x T
    Matrix gates;                  // 4H x T after nonlinearity
    Matrix cell;                   // H x (T+1), column 0 = initial zero state
    Matrix hidden;                 // H x (T+1)
    Matrix cell_tanh;              // H x T
    Vector dec_pre;
    Scalar logit = 0;
    Scalar output = 0;
  };

  ValueModel() = default;
  explicit ValueModel(ModelConfig config)
      : config_(std::move(config)), layout_(config_), params_(Vector::Zero(layout_.size())) {}

  /// Fan-in uniform affine weights, orthogonal recurrent blocks, zero biases,
  /// forget-gate bias 1.
  static ValueModel initialized(ModelConfig config, std::uint64_t seed) {
    ValueModel m(std::move(config));
    Rng rng(seed, {0x1717ULL});
    auto uniform = [&](const ParameterLayout::Block& b, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < b.size(); ++i)
        m.params_[b.offset + i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    };
    const auto& L = m.layout_;
    const double e = m.config_.embed_dim;
    for (const auto* s : {&L.value, &L.time, &L.delta_value, &L.delta_time}) {
      uniform(s->w1, 1.0);
      uniform(s->w2, e);
    }
    uniform(L.feature_table, m.config_.feature_vocab);
    for (const auto& cv : L.conv) uniform(cv.w, static_cast<double>(cv.kernel) * cv.in_channels);
    uniform(L.lstm_wx, L.lstm_in);
    const Eigen::Index h = m.config_.recurrent_hidden;
    for (Eigen::Index g = 0; g < 4; ++g) {
      Eigen::MatrixXd gauss(h, h);
      for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(h, h);
      const Eigen::MatrixXd r = qr.matrixQR();
      for (Eigen::Index j = 0; j < h; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
      m.mat(L.lstm_wh).middleRows(g * h, h) = q.cast<Scalar>();
    }
    m.mat(L.lstm_b).middleRows(h, h).setOnes();
    uniform(L.dec_w1, static_cast<double>(h));
    uniform(L.dec_w2, m.config_.decoder_hidden);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Eigen::Index size() const { return params_.size(); }

  template <typename Other>
  ValueModel<Other> cast() const {
    ValueModel<Other> out(config_);
    out.parameters() = params_.template cast<Other>();
    return out;
  }

  MatrixMap mat(const ParameterLayout::Block& b) {
    return MatrixMap(params_.data() + b.offset, b.rows, b.cols);
  }
  ConstMatrixMap mat(const ParameterLayout::Block& b) const {
    return ConstMatrixMap(params_.data() + b.offset, b.rows, b.cols);
  }

  /// Summed embedding e_n of one standardized tuple.
  Vector embed(const MeasurementTuple& t) const {
    check_feature(t.feature);
    const auto& L = layout_;
    Vector out = scalar_embed(L.value, static_cast<Scalar>(t.value));
    out += scalar_embed(L.time, static_cast<Scalar>(t.time_offset));
    out += mat(L.feature_table).col(t.feature.value);
    if (t.has_delta) {
      out += scalar_embed(L.delta_value, static_cast<Scalar>(t.delta_value));
      out += scalar_embed(L.delta_time, static_cast<Scalar>(t.delta_time));
    } else {
      out += mat(L.delta_value.no_history);
      out += mat(L.delta_time.no_history);
    }
    return out;
  }

  /// Predicted risk in (0, 1).
  Scalar forward(const ObservationWindow& window) const {
    Trace trace;
    return forward(window, trace);
  }

  Scalar forward(const ObservationWindow& window, Trace& tr) const {
    const auto& L = layout_;
    const Eigen::Index n = static_cast<Eigen::Index>(window.size());
    if (n == 0) throw InvalidInput("forward: empty observation window");
    if (n > static_cast<Eigen::Index>(kMaxWindowLength))
      throw InvalidInput("forward: window longer than 400 tuples");
    const Eigen::Index e = config_.embed_dim;

    tr.length = n;
    tr.inputs.resize(4, n);
    tr.features.resize(static_cast<std::size_t>(n));
    tr.has_delta.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& t = window.tuples[static_cast<std::size_t>(j)];
      check_feature(t.feature);
      tr.inputs(0, j) = static_cast<Scalar>(t.value);
      tr.inputs(1, j) = static_cast<Scalar>(t.time_offset);
      tr.inputs(2, j) = static_cast<Scalar>(t.delta_value);
      tr.inputs(3, j) = static_cast<Scalar>(t.delta_time);
      tr.features[static_cast<std::size_t>(j)] = t.feature.value;
      tr.has_delta[static_cast<std::size_t>(j)] = t.has_delta ? 1 : 0;
    }

    // Embedding: sum of five component embeddings, written straight into the
    // zero-padded input of the first conv stage (or the LSTM input).
    Matrix embedded(e, n);
    const ParameterLayout::ScalarEmbedder* emb[4] = {&L.value, &L.time, &L.delta_value,
                                                     &L.delta_time};
    for (int c = 0; c < 4; ++c) {
      const auto& s = *emb[c];
      tr.hidden_pre[c] = (mat(s.w1) * tr.inputs.row(c)).colwise() + mat(s.b1).col(0);
      Matrix out = (mat(s.w2) * tr.hidden_pre[c].cwiseMax(Scalar(0))).colwise() + mat(s.b2).col(0);
      if (c >= 2) {
        for (Eigen::Index j = 0; j < n; ++j)
          if (!tr.has_delta[static_cast<std::size_t>(j)]) out.col(j) = mat(s.no_history).col(0);
      }
      if (c == 0) embedded = std::move(out);
      else embedded += out;
    }
    const auto table = mat(L.feature_table);
    for (Eigen::Index j = 0; j < n; ++j) embedded.col(j) += table.col(tr.features[static_cast<std::size_t>(j)]);

    // Convolution stages with left zero padding.
    Matrix x = std::move(embedded);
    tr.conv_in.resize(L.conv.size());
    tr.conv_pre.resize(L.conv.size());
    for (std::size_t s = 0; s < L.conv.size(); ++s) {
      const auto& cv = L.conv[s];
      const Eigen::Index len = x.cols();
      const Eigen::Index out_len = conv_output_length(len, cv.kernel, cv.stride);
      const Eigen::Index padded = (out_len - 1) * cv.stride + cv.kernel;
      Matrix& xp = tr.conv_in[s];
      xp.setZero(cv.in_channels, padded);
      xp.rightCols(len) = x;
      const Eigen::Index span = static_cast<Eigen::Index>(cv.kernel) * cv.in_channels;
      const Eigen::Index step = static_cast<Eigen::Index>(cv.stride) * cv.in_channels;
      // Column j of the im2col matrix is a contiguous slice of xp.
      Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> cols(xp.data(), span, out_len,
                                                            Eigen::OuterStride<>(step));
      tr.conv_pre[s] = (mat(cv.w) * cols).colwise() + mat(cv.b).col(0);
      x = tr.conv_pre[s].cwiseMax(Scalar(0));
    }

    // LSTM over the reduced sequence, gate order i, f, g, o.
    const Eigen::Index h = config_.recurrent_hidden;
    const Eigen::Index steps = x.cols();
    tr.lstm_x = std::move(x);
    tr.gates = (mat(L.lstm_wx) * tr.lstm_x).colwise() + mat(L.lstm_b).col(0);
    tr.cell.setZero(h, steps + 1);
    tr.hidden.setZero(h, steps + 1);
    tr.cell_tanh.resize(h, steps);
    const auto wh = mat(L.lstm_wh);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto g = tr.gates.col(t);
      g.noalias() += wh * tr.hidden.col(t);
      g.segment(0, 2 * h) = sigmoid(g.segment(0, 2 * h));
      g.segment(2 * h, h) = g.segment(2 * h, h).array().tanh().matrix();
      g.segment(3 * h, h) = sigmoid(g.segment(3 * h, h));
      tr.cell.col(t + 1) = g.segment(h, h).cwiseProduct(tr.cell.col(t)) +
                           g.segment(0, h).cwiseProduct(g.segment(2 * h, h));
      tr.cell_tanh.col(t) = tr.cell.col(t + 1).array().tanh().matrix();
      tr.hidden.col(t + 1) = g.segment(3 * h, h).cwiseProduct(tr.cell_tanh.col(t));
    }

    tr.dec_pre = mat(L.dec_w1) * tr.hidden.col(steps) + mat(L.dec_b1).col(0);
    tr.logit = (mat(L.dec_w2) * tr.dec_pre.cwiseMax(Scalar(0)))(0, 0) + mat(L.dec_b2)(0, 0);
    tr.output = Scalar(1) / (Scalar(1) + std::exp(-tr.logit));
    return tr.output;
  }

  /// Adds d(loss)/d(theta) to `grad` given d(loss)/d(logit) for the traced pass.
  void backward(const Trace& tr, Scalar dlogit, Eigen::Ref<Vector> grad) const {
    const auto& L = layout_;
    auto g = [&](const ParameterLayout::Block& b) {
      return MatrixMap(grad.data() + b.offset, b.rows, b.cols);
    };
    const Eigen::Index h = config_.recurrent_hidden;
    const Eigen::Index steps = tr.lstm_x.cols();

    // Decoder.
    const Vector dec_act = tr.dec_pre.cwiseMax(Scalar(0));
    g(L.dec_b2)(0, 0) += dlogit;
    g(L.dec_w2) += dlogit * dec_act.transpose();
    Vector d_dec = (mat(L.dec_w2).transpose() * dlogit).col(0);
    d_dec = d_dec.cwiseProduct(relu_mask(tr.dec_pre));
    g(L.dec_b1).col(0) += d_dec;
    g(L.dec_w1) += d_dec * tr.hidden.col(steps).transpose();

    // LSTM, backpropagation through time.
    Matrix d_gates(4 * h, steps);
    Vector dh = mat(L.dec_w1).transpose() * d_dec;
    Vector dc = Vector::Zero(h);
    const auto wh = mat(L.lstm_wh);
    for (Eigen::Index t = steps; t-- > 0;) {
      const auto gate = tr.gates.col(t);
      const auto i = gate.segment(0, h).array();
      const auto f = gate.segment(h, h).array();
      const auto gg = gate.segment(2 * h, h).array();
      const auto o = gate.segment(3 * h, h).array();
      const auto tc = tr.cell_tanh.col(t).array();
      dc.array() += dh.array() * o * (Scalar(1) - tc * tc);
      auto dg = d_gates.col(t);
      dg.segment(0, h) = (dc.array() * gg * i * (Scalar(1) - i)).matrix();
      dg.segment(h, h) = (dc.array() * tr.cell.col(t).array() * f * (Scalar(1) - f)).matrix();
      dg.segment(2 * h, h) = (dc.array() * i * (Scalar(1) - gg * gg)).matrix();
      dg.segment(3 * h, h) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
      dc.array() *= f;
      dh.noalias() = wh.transpose() * dg;
    }
    g(L.lstm_b).col(0) += d_gates.rowwise().sum();
    g(L.lstm_wx).noalias() += d_gates * tr.lstm_x.transpose();
    g(L.lstm_wh).noalias() += d_gates * tr.hidden.leftCols(steps).transpose();
    Matrix dx = mat(L.lstm_wx).transpose() * d_gates;

    // Conv stages in reverse.
    for (std::size_t s = L.conv.size(); s-- > 0;) {
      const auto& cv = L.conv[s];
      const Matrix& xp = tr.conv_in[s];
      const Eigen::Index out_len = tr.conv_pre[s].cols();
      const Eigen::Index span = static_cast<Eigen::Index>(cv.kernel) * cv.in_channels;
      const Eigen::Index step = static_cast<Eigen::Index>(cv.stride) * cv.in_channels;
      const Matrix d_pre = dx.cwiseProduct(relu_mask(tr.conv_pre[s]));
      g(cv.b).col(0) += d_pre.rowwise().sum();
      Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> cols(xp.data(), span, out_len,
                                                            Eigen::OuterStride<>(step));
      g(cv.w).noalias() += d_pre * cols.transpose();
      const Matrix d_cols = mat(cv.w).transpose() * d_pre;
      Matrix d_xp = Matrix::Zero(cv.in_channels, xp.cols());
      for (Eigen::Index j = 0; j < out_len; ++j) {
        Eigen::Map<Vector> slot(d_xp.data() + j * step, span);
        slot += d_cols.col(j);
      }
      const Eigen::Index len = s == 0 ? tr.length : tr.conv_pre[s - 1].cols();
      dx = d_xp.rightCols(len);
    }

    // Embedders.
    const Eigen::Index n = tr.length;
    auto table = g(L.feature_table);
    for (Eigen::Index j = 0; j < n; ++j) table.col(tr.features[static_cast<std::size_t>(j)]) += dx.col(j);
    const ParameterLayout::ScalarEmbedder* emb[4] = {&L.value, &L.time, &L.delta_value,
                                                     &L.delta_time};
    for (int c = 0; c < 4; ++c) {
      const auto& s = *emb[c];
      Matrix d_out = dx;
      if (c >= 2) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (tr.has_delta[static_cast<std::size_t>(j)]) continue;
          g(s.no_history).col(0) += dx.col(j);
          d_out.col(j).setZero();
        }
      }
      g(s.b2).col(0) += d_out.rowwise().sum();
      g(s.w2).noalias() += d_out * tr.hidden_pre[c].cwiseMax(Scalar(0)).transpose();
      const Matrix d_hidden = (mat(s.w2).transpose() * d_out).cwiseProduct(relu_mask(tr.hidden_pre[c]));
      g(s.b1).col(0) += d_hidden.rowwise().sum();
      g(s.w1).col(0) += d_hidden * tr.inputs.row(c).transpose();
    }
  }

 private:
  template <typename Derived>
  static auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
    return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
  }

  template <typename Derived>
  static Matrix relu_mask(const Eigen::MatrixBase<Derived>& x) {
    return (x.array() > Scalar(0)).template cast<Scalar>().matrix();
  }

  Vector scalar_embed(const ParameterLayout::ScalarEmbedder& s, Scalar x) const {
    const Vector hidden = (mat(s.w1).col(0) * x + mat(s.b1).col(0)).cwiseMax(Scalar(0));
    return mat(s.w2) * hidden + mat(s.b2).col(0);
  }

  void check_feature(FeatureId f) const {
    if (f.value < 0 || f.value >= config_.feature_vocab)
      throw InvalidInput("tuple feature id outside the model vocabulary");
  }

  ModelConfig config_;
  ParameterLayout layout_;
  Vector params_;
};

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient;
  std::size_t clamped = 0;  // predictions clamped away from 0 or 1
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Thrown when a batch produces a non-finite loss.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean over the batch of w_i * BCE(pred_i, target_i) and its exact gradient.
/// The batch is cut into a fixed number of chunks so the floating-point
/// reduction order never depends on the worker count.
template <typename Scalar>
LossGradient<Scalar> backward(const ValueModel<Scalar>& model,
                              std::span<const ObservationWindow* const> batch,
                              std::span<const Scalar> targets, std::span<const Scalar> weights) {
  using Vector = typename ValueModel<Scalar>::Vector;
  if (batch.empty()) throw InvalidInput("backward: empty batch");
  if (targets.size() != batch.size() || weights.size() != batch.size())
    throw InvalidInput("backward: batch, targets and weights differ in length");
  const std::size_t n = batch.size();
  constexpr std::size_t kChunks = 8;
  const std::size_t chunks = std::min(kChunks, n);
  std::vector<Vector> grads(chunks, Vector::Zero(model.size()));
  std::vector<double> losses(n, 0.0);
  std::vector<Scalar> preds(n, Scalar(0));
  std::vector<std::uint8_t> clamped(n, 0);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  parallel_for(chunks, [&](std::size_t c) {
    typename ValueModel<Scalar>::Trace trace;
    for (std::size_t i = c * n / chunks; i < (c + 1) * n / chunks; ++i) {
      const Scalar p = model.forward(*batch[i], trace);
      const Scalar t = targets[i];
      double pc = static_cast<double>(p);
      if (pc < kProbabilityClamp || pc > 1.0 - kProbabilityClamp) {
        pc = std::clamp(pc, kProbabilityClamp, 1.0 - kProbabilityClamp);
        clamped[i] = 1;
      }
      const double td = static_cast<double>(t);
      losses[i] = -static_cast<double>(weights[i]) * (td * std::log(pc) + (1.0 - td) * std::log(1.0 - pc));
      preds[i] = p;
      if (weights[i] != Scalar(0)) model.backward(trace, weights[i] * (p - t) * inv_n, grads[c]);
    }
  });
  LossGradient<Scalar> out;
  double total = 0.0;
  for (double l : losses) total += l;
  out.loss = static_cast<Scalar>(total / static_cast<double>(n));
  if (!std::isfinite(total)) {
    std::string msg = "non-finite loss in batch of " + std::to_string(n) + "; predictions:";
    for (std::size_t i = 0; i < std::min<std::size_t>(n, 8); ++i)
      msg += " " + std::to_string(static_cast<double>(preds[i]));
    throw NonFiniteLoss(msg);
  }
  out.gradient = std::move(grads[0]);
  for (std::size_t c = 1; c < chunks; ++c) out.gradient += grads[c];
  for (auto k : clamped) out.clamped += k;
  return out;
}

/// theta_target <- alpha * theta_target + (1 - alpha) * theta_main.
template <typename Scalar>
void soft_update(ValueModel<Scalar>& target, const ValueModel<Scalar>& main, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("soft_update: alpha outside [0,1]");
  if (target.config() != main.config() || target.size() != main.size())
    throw InvalidInput("soft_update: parameter shapes differ");
  const auto a = static_cast<Scalar>(alpha);
  if (alpha == 1.0) return;
  if (alpha == 0.0) {
    target.parameters() = main.parameters();
    return;
  }
  target.parameters() = a * target.parameters() + (Scalar(1) - a) * main.parameters();
}

/// Risk predictions for many windows, evaluated in parallel.
template <typename Scalar>
std::vector<double> predict(const ValueModel<Scalar>& model,
                            std::span<const ObservationWindow* const> windows) {
  std::vector<double> out(windows.size());
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (windows.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    typename ValueModel<Scalar>::Trace trace;
    for (std::size_t i = b * kBlock; i < std::min(windows.size(), (b + 1) * kBlock); ++i)
      out[i] = static_cast<double>(model.forward(*windows[i], trace));
  });
  return out;
}

}  // namespace tdsmrp

#endif  // TDSMRP_MODEL_HPP
