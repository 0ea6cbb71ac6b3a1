#include "dpgkit/nn.hpp"

#include <cmath>

namespace dpgkit::nn {

using nlohmann::json;

namespace {

void fill_uniform(Matrix& m, Rng& rng, double scale) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-scale, scale);
}

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

}  // namespace

void zero_grads(std::span<const ParamRef> params) {
  for (const auto& p : params) p.grad->setZero();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Dense::Dense(int in, int out)
    : W(Matrix::Zero(out, in)), b(Matrix::Zero(out, 1)), dW(Matrix::Zero(out, in)), db(Matrix::Zero(out, 1)) {}

void Dense::init(Rng& rng) {
  fill_uniform(W, rng, std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols())));
  b.setZero();
}

Matrix Dense::forward(const Matrix& x) const { return (W * x).colwise() + b.col(0); }

Matrix Dense::backward(const Matrix& x, const Matrix& dy) {
  dW.noalias() += dy * x.transpose();
  db.col(0) += dy.rowwise().sum();
  return W.transpose() * dy;
}

void Dense::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".W", &W, &dW});
  out.push_back({prefix + ".b", &b, &db});
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  return (x.array() > 0.0).select(dy, Matrix::Zero(dy.rows(), dy.cols()));
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - mx).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

LstmLayer::LstmLayer(int in, int hidden)
    : Wx(Matrix::Zero(4 * hidden, in)),
      Wh(Matrix::Zero(4 * hidden, hidden)),
      b(Matrix::Zero(4 * hidden, 1)),
      dWx(Matrix::Zero(4 * hidden, in)),
      dWh(Matrix::Zero(4 * hidden, hidden)),
      db(Matrix::Zero(4 * hidden, 1)) {}

void LstmLayer::init(Rng& rng, double forget_bias) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden()));
  fill_uniform(Wx, rng, scale);
  fill_uniform(Wh, rng, scale);
  b.setZero();
  b.block(hidden(), 0, hidden(), 1).setConstant(forget_bias);
}

LstmLayer::State LstmLayer::zero_state(int batch) const {
  return {Matrix::Zero(hidden(), batch), Matrix::Zero(hidden(), batch)};
}

Matrix LstmLayer::step(const Matrix& x, State& s) const {
  const int H = hidden();
  Matrix z = Wx * x + Wh * s.h;
  z.colwise() += b.col(0);
  const Matrix ifo = sigmoid(z.topRows(3 * H));
  const Matrix g = z.bottomRows(H).array().tanh().matrix();
  s.c = (ifo.middleRows(H, H).array() * s.c.array() + ifo.topRows(H).array() * g.array()).matrix();
  s.h = (ifo.middleRows(2 * H, H).array() * s.c.array().tanh()).matrix();
  return s.h;
}

std::vector<Matrix> LstmLayer::forward(const std::vector<Matrix>& xs, LstmTrace& tr,
                                       std::span<const RowVector> mask) const {
  const int H = hidden();
  const std::size_t T = xs.size();
  const int B = T ? static_cast<int>(xs[0].cols()) : 0;
  tr = LstmTrace{};
  tr.x = xs;
  tr.mask.assign(mask.begin(), mask.end());
  tr.h0 = Matrix::Zero(H, B);
  tr.c0 = Matrix::Zero(H, B);
  for (auto* v : {&tr.i, &tr.f, &tr.o, &tr.g, &tr.c, &tr.h, &tr.tanh_c}) v->resize(T);

  for (std::size_t t = 0; t < T; ++t) {
    const Matrix& hp = t ? tr.h[t - 1] : tr.h0;
    const Matrix& cp = t ? tr.c[t - 1] : tr.c0;
    Matrix z = Wx * xs[t] + Wh * hp;
    z.colwise() += b.col(0);
    const Matrix ifo = sigmoid(z.topRows(3 * H));
    tr.i[t] = ifo.topRows(H);
    tr.f[t] = ifo.middleRows(H, H);
    tr.o[t] = ifo.middleRows(2 * H, H);
    tr.g[t] = z.bottomRows(H).array().tanh().matrix();
    Matrix c = (tr.f[t].array() * cp.array() + tr.i[t].array() * tr.g[t].array()).matrix();
    tr.tanh_c[t] = c.array().tanh().matrix();
    Matrix h = (tr.o[t].array() * tr.tanh_c[t].array()).matrix();
    if (!tr.mask.empty()) {
      const auto& m = tr.mask[t];
      for (int j = 0; j < B; ++j)
        if (m(j) == 0.0) {
          c.col(j) = cp.col(j);
          h.col(j) = hp.col(j);
        }
    }
    tr.c[t] = std::move(c);
    tr.h[t] = std::move(h);
  }
  return tr.h;
}

std::vector<Matrix> LstmLayer::backward(const std::vector<Matrix>& dhs, const LstmTrace& tr) {
  const int H = hidden();
  const std::size_t T = tr.x.size();
  std::vector<Matrix> dxs(T);
  if (T == 0) return dxs;
  const int B = static_cast<int>(tr.x[0].cols());
  Matrix dh_next = Matrix::Zero(H, B);
  Matrix dc_next = Matrix::Zero(H, B);
  Matrix dz(4 * H, B);
  for (std::size_t s = T; s-- > 0;) {
    const Matrix& hp = s ? tr.h[s - 1] : tr.h0;
    const Matrix& cp = s ? tr.c[s - 1] : tr.c0;
    Matrix dh = dhs[s] + dh_next;
    Matrix dc_carry = dc_next;  // gradient w.r.t. c_s from step s+1

    // For masked-out columns the step is the identity on (h, c).
    Matrix pass_h, pass_c;
    if (!tr.mask.empty()) {
      pass_h = Matrix::Zero(H, B);
      pass_c = Matrix::Zero(H, B);
      for (int j = 0; j < B; ++j)
        if (tr.mask[s](j) == 0.0) {
          pass_h.col(j) = dh.col(j);
          pass_c.col(j) = dc_carry.col(j);
          dh.col(j).setZero();
          dc_carry.col(j).setZero();
        }
    }

    const auto o = tr.o[s].array(), tc = tr.tanh_c[s].array();
    const auto i = tr.i[s].array(), f = tr.f[s].array(), g = tr.g[s].array();
    const Eigen::ArrayXXd dc = dc_carry.array() + dh.array() * o * (1.0 - tc * tc);
    dz.topRows(H) = (dc * g * i * (1.0 - i)).matrix();
    dz.middleRows(H, H) = (dc * cp.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dz.bottomRows(H) = (dc * i * (1.0 - g * g)).matrix();

    dWx.noalias() += dz * tr.x[s].transpose();
    dWh.noalias() += dz * hp.transpose();
    db.col(0) += dz.rowwise().sum();
    dxs[s] = Wx.transpose() * dz;
    dh_next = Wh.transpose() * dz;
    dc_next = (dc * f).matrix();
    if (!tr.mask.empty()) {
      dh_next += pass_h;
      dc_next += pass_c;
    }
  }
  return dxs;
}

void LstmLayer::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".Wx", &Wx, &dWx});
  out.push_back({prefix + ".Wh", &Wh, &dWh});
  out.push_back({prefix + ".b", &b, &db});
}

bool RmsProp::step(std::span<const ParamRef> params) {
  for (const auto& p : params)
    if (!p.grad->allFinite()) {
      ++skipped_;
      return false;
    }
  if (cache_.size() != params.size()) {
    cache_.clear();
    for (const auto& p : params) cache_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *params[k].grad;
    cache_[k] = decay_ * cache_[k] + (1.0 - decay_) * g.cwiseProduct(g);
    params[k].value->array() -= lr_ * g.array() / (cache_[k].array().sqrt() + eps_);
  }
  return true;
}

bool Sgd::step(std::span<const ParamRef> params) {
  for (const auto& p : params)
    if (!p.grad->allFinite()) {
      ++skipped_;
      return false;
    }
  for (const auto& p : params) *p.value -= lr_ * *p.grad;
  return true;
}

json params_to_json(std::span<const ParamRef> params) {
  json j = json::object();
  for (const auto& p : params) {
    const Matrix& m = *p.value;
    std::vector<double> data(m.data(), m.data() + m.size());
    j[p.name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  return j;
}

void params_from_json(const json& j, std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (!j.contains(p.name)) throw DataError("model file is missing parameter " + p.name);
    const auto& e = j.at(p.name);
    const auto rows = e.at("rows").get<Eigen::Index>(), cols = e.at("cols").get<Eigen::Index>();
    if (rows != p.value->rows() || cols != p.value->cols())
      throw DataError("parameter " + p.name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + std::to_string(p.value->rows()) + "x" + std::to_string(p.value->cols()));
    const auto data = e.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(rows * cols)) throw DataError("parameter " + p.name + " has bad data");
    *p.value = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
}

}  // namespace dpgkit::nn
