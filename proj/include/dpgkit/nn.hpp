#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dpgkit/util.hpp"

namespace dpgkit::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

void zero_grads(std::span<const ParamRef> params);
bool all_finite(const Matrix& m);

/// Fully connected layer, y = W x + b, over column batches.
class Dense {
 public:
  Dense() = default;
  Dense(int in, int out);

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  /// Accumulates weight gradients and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  int in() const { return static_cast<int>(W.cols()); }
  int out() const { return static_cast<int>(W.rows()); }

  Matrix W, b;
  Matrix dW, db;
};

Matrix relu(const Matrix& x);
/// dL/dx of relu given its input x.
Matrix relu_backward(const Matrix& x, const Matrix& dy);
/// Column-wise softmax with max subtraction.
Matrix softmax_columns(const Matrix& logits);

/// Per-sequence intermediate values kept for backpropagation.
struct LstmTrace {
  std::vector<Matrix> x, i, f, o, g, c, h, tanh_c;
  std::vector<RowVector> mask;  // empty -> every column active at every step
  Matrix h0, c0;
};

/// Single LSTM layer over column batches. Gate rows are stacked as
/// [input; forget; output; candidate]:
///   i = sig(Wx_i x + Wh_i h + b_i), f = sig(...), o = sig(...), g = tanh(...)
///   c' = f * c + i * g,  h' = o * tanh(c')
/// With a step mask, inactive columns carry (h, c) through unchanged.
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(int in, int hidden);

  void init(Rng& rng, double forget_bias);
  int in() const { return static_cast<int>(Wx.cols()); }
  int hidden() const { return static_cast<int>(Wh.cols()); }

  /// Runs the whole sequence from zero state; xs[t] is in x batch.
  std::vector<Matrix> forward(const std::vector<Matrix>& xs, LstmTrace& trace,
                              std::span<const RowVector> mask = {}) const;
  /// dhs[t] is dL/dh_t from above; returns dL/dx_t and accumulates gradients.
  std::vector<Matrix> backward(const std::vector<Matrix>& dhs, const LstmTrace& trace);

  struct State {
    Matrix h, c;
  };
  State zero_state(int batch) const;
  /// One step without recording a trace.
  Matrix step(const Matrix& x, State& state) const;

  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Matrix Wx, Wh, b;
  Matrix dWx, dWh, db;
};

/// RMSProp: cache <- decay * cache + (1 - decay) g^2; p <- p - lr g / (sqrt(cache) + eps).
class RmsProp {
 public:
  explicit RmsProp(double lr, double decay = 0.9, double eps = 1e-8) : lr_(lr), decay_(decay), eps_(eps) {}

  /// Returns false, and leaves parameters and state untouched, when any
  /// gradient is non-finite.
  bool step(std::span<const ParamRef> params);
  std::size_t skipped() const { return skipped_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, decay_, eps_;
  std::vector<Matrix> cache_;
  std::size_t skipped_ = 0;
};

/// Plain gradient descent, p <- p - lr g.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  bool step(std::span<const ParamRef> params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::size_t skipped() const { return skipped_; }

 private:
  double lr_;
  std::size_t skipped_ = 0;
};

/// {"name": {"rows", "cols", "data"}} with shape checks on load.
nlohmann::json params_to_json(std::span<const ParamRef> params);
void params_from_json(const nlohmann::json& j, std::span<const ParamRef> params);

}  // namespace dpgkit::nn
