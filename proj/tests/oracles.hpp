// Explicit-loop reference computations used only by tests. Nothing here calls
// into the tape or the Eigen expression paths of the library.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "emotint/attention.hpp"
#include "emotint/encoding.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// x (1 x in) times W (in x out) plus b, by loops.
inline std::vector<double> affine_row(const std::vector<double>& x, const Eigen::MatrixXd& w,
                                      const Eigen::MatrixXd& b) {
  std::vector<double> y(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index o = 0; o < w.cols(); ++o) {
    double s = b(0, o);
    for (Eigen::Index i = 0; i < w.rows(); ++i) s += x[static_cast<std::size_t>(i)] * w(i, o);
    y[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

inline Mat affine(const Mat& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  Mat y;
  for (const auto& row : x) y.push_back(affine_row(row, w, b));
  return y;
}

struct AttentionResult {
  Mat output;
  std::vector<Mat> weights;
};

inline AttentionResult attention(const Mat& q_in, const Mat& k_in, const Mat& v_in,
                                 const emotint::AttentionParams<double>& p) {
  const Mat q = affine(q_in, p.wq.value, p.bq.value);
  const Mat k = affine(k_in, p.wk.value, p.bk.value);
  const Mat v = affine(v_in, p.wv.value, p.bv.value);
  const std::size_t n = q.size(), m = k.size();
  const int width = p.width(), dh = width / p.heads;
  Mat concat(n, std::vector<double>(static_cast<std::size_t>(width), 0.0));
  AttentionResult r;
  for (int h = 0; h < p.heads; ++h) {
    Mat w(n, std::vector<double>(m));
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0;
        for (int c = 0; c < dh; ++c) s += q[i][h * dh + c] * k[j][h * dh + c];
        w[i][j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, w[i][j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < m; ++j) z += (w[i][j] = std::exp(w[i][j] - mx));
      for (std::size_t j = 0; j < m; ++j) w[i][j] /= z;
      for (int c = 0; c < dh; ++c) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += w[i][j] * v[j][h * dh + c];
        concat[i][h * dh + c] = s;
      }
    }
    r.weights.push_back(w);
  }
  r.output = affine(concat, p.wo.value, p.bo.value);
  return r;
}

inline Mat layer_norm(const Mat& x, const Eigen::MatrixXd& gain, const Eigen::MatrixXd& bias) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i].size());
    double mu = 0, var = 0;
    for (double v : x[i]) mu += v;
    mu /= d;
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= d;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * gain(0, j) + bias(0, j);
    }
  }
  return y;
}

inline Mat transformer_layer(const Mat& x, const emotint::FusionParams<double>& p) {
  const Mat n1 = layer_norm(x, p.ln1_gain.value, p.ln1_bias.value);
  const Mat att = attention(n1, n1, n1, p.attention).output;
  Mat x1 = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) x1[i][j] += att[i][j];
  const Mat n2 = layer_norm(x1, p.ln2_gain.value, p.ln2_bias.value);
  Mat inner = affine(n2, p.ff_w1.value, p.ff_b1.value);
  for (auto& row : inner)
    for (double& v : row) v = std::max(0.0, v);
  const Mat ff = affine(inner, p.ff_w2.value, p.ff_b2.value);
  Mat y = x1;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y[i].size(); ++j) y[i][j] += ff[i][j];
  return y;
}

// Standard LSTM gate equations, one scalar at a time. Returns every hidden state.
inline Mat lstm_states(const Mat& x, const emotint::LstmParams<double>& p) {
  const int hidden = p.hidden();
  const int d = p.input_dim();
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0), c(static_cast<std::size_t>(hidden), 0.0);
  Mat states;
  for (const auto& xt : x) {
    std::vector<double> nh(h.size()), nc(c.size());
    for (int u = 0; u < hidden; ++u) {
      double pre[4];
      for (int gate = 0; gate < 4; ++gate) {
        const int col = gate * hidden + u;
        double s = p.bias.value(0, col);
        for (int i = 0; i < d; ++i) s += xt[static_cast<std::size_t>(i)] * p.w_input.value(i, col);
        for (int j = 0; j < hidden; ++j) s += h[static_cast<std::size_t>(j)] * p.w_hidden.value(j, col);
        pre[gate] = s;
      }
      const double ig = sigmoid(pre[0]), fg = sigmoid(pre[1]), gg = std::tanh(pre[2]), og = sigmoid(pre[3]);
      nc[u] = fg * c[u] + ig * gg;
      nh[u] = og * std::tanh(nc[u]);
    }
    h = nh;
    c = nc;
    states.push_back(h);
  }
  return states;
}

inline std::vector<double> max_over_rows(const Mat& m) {
  std::vector<double> out = m.front();
  for (const auto& row : m)
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = std::max(out[j], row[j]);
  return out;
}

// Sliding-window dot products, ReLU, max over positions.
inline std::vector<double> text_conv(const Mat& x, const emotint::TextConvParams<double>& p) {
  const int k = std::min<int>(p.kernel, static_cast<int>(x.size()));
  const int d = p.input_dim();
  const int hidden = p.hidden();
  Mat acts;
  for (std::size_t pos = 0; pos + static_cast<std::size_t>(k) <= x.size(); ++pos) {
    std::vector<double> a(static_cast<std::size_t>(hidden));
    for (int o = 0; o < hidden; ++o) {
      double s = p.bias.value(0, o);
      for (int j = 0; j < k; ++j)
        for (int i = 0; i < d; ++i) s += x[pos + j][static_cast<std::size_t>(i)] * p.weight.value(j * d + i, o);
      a[static_cast<std::size_t>(o)] = std::max(0.0, s);
    }
    acts.push_back(a);
  }
  return max_over_rows(acts);
}

// Weighted F1 counting each class independently with per-element scans.
inline double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  double total = 0;
  const double n = static_cast<double>(truth.size());
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      if (t) support += 1;
      if (t && p) tp += 1;
      if (!t && p) fp += 1;
      if (t && !p) fn += 1;
    }
    if (support == 0) continue;
    const double precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp / (tp + fn);
    const double f1 = (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    total += f1 * support / n;
  }
  return total;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

/// Replaces every parameter value with N(0, scale^2) draws (biases and gains included).
template <typename Params>
void randomize(Params& p, std::mt19937_64& rng, double scale = 0.5) {
  p.visit([&](emotint::Parameter<double>& q) {
    q.value = random_matrix(q.value.rows(), q.value.cols(), rng, scale);
  });
}

inline double max_abs_diff(const Mat& a, const Eigen::MatrixXd& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b(i, j)));
  return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const Eigen::MatrixXd& b) {
  double worst = 0;
  for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b(0, j)));
  return worst;
}

}  // namespace oracle
