// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate matrix of one forward evaluation together
// with a closure that pushes an upstream gradient back to its inputs. Model
// parameters enter the tape by reference; after backward() their gradients
// are added into Parameter::grad through accumulate_into().
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace emotint {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A named trainable array and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, MatrixX<Scalar> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(MatrixX<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const MatrixX<Scalar>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    return push(std::move(node));
  }

  /// References `p.value` without copying; `p` must outlive the tape.
  Var<Scalar> parameter(const Parameter<Scalar>& p) {
    Node node;
    node.ref = &p.value;
    node.source = &p;
    node.requires_grad = true;
    Var<Scalar> v = push(std::move(node));
    param_nodes_[&p].push_back(v.id);
    return v;
  }

  Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs,
                     Backward backward) {
    Node node;
    node.value = std::move(value);
    for (const auto& in : inputs) {
      if (nodes_.at(in.id).requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  Var<Scalar> record(Matrix value, const std::vector<Var<Scalar>>& inputs,
                     Backward backward) {
    Node node;
    node.value = std::move(value);
    for (const auto& in : inputs) {
      if (nodes_.at(in.id).requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  const Matrix& value(Var<Scalar> v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.value;
  }

  bool requires_grad(Var<Scalar> v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of the last backward() root with respect to `v` (zero if unreached).
  Matrix grad(Var<Scalar> v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every input.
  void backward(Var<Scalar> root) {
    const Matrix& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) {
      throw std::invalid_argument("backward root must be a 1x1 scalar");
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_.at(root.id).grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  void accumulate_into(Parameter<Scalar>& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end()) return;
    for (int id : it->second) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() != 0) p.grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

  /// Handle the next recorded node will receive; lets a closure read its own output.
  Var<Scalar> next() { return Var<Scalar>{this, static_cast<int>(nodes_.size())}; }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    const Parameter<Scalar>* source = nullptr;
    bool requires_grad = false;
    Backward backward;
    Matrix grad;
  };

  Var<Scalar> push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, std::vector<int>> param_nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations.

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  auto& t = *a.tape;
  detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  return t.record(a.value() * b.value(), {a, b},
                  [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
                    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
                  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return a.tape->record(a.value() + b.value(), {a, b},
                        [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          tp.accumulate(a, g);
                          tp.accumulate(b, g);
                        });
}

/// a (n x d) plus a 1 x d row broadcast over every row.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  MatrixX<Scalar> out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row},
                        [a, row](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          tp.accumulate(a, g);
                          tp.accumulate(row, g.colwise().sum());
                        });
}

/// x W + b with W stored as (in x out) and b as 1 x out.
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  return add_row(matmul(x, weight), bias);
}

template <typename Scalar>
Var<Scalar> hadamard(Var<Scalar> a, Var<Scalar> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b},
                        [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
                          if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
                        });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  return a.tape->record(a.value() * s, {a},
                        [a, s](Tape<Scalar>& tp, const MatrixX<Scalar>& g) { tp.accumulate(a, g * s); });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  MatrixX<Scalar> y =
      a.value().unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  const Var<Scalar> out = a.tape->next();
  return a.tape->record(std::move(y), {a}, [a, out](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
    const auto& yv = tp.value(out);
    tp.accumulate(a, g.cwiseProduct((yv.array() * (Scalar(1) - yv.array())).matrix()));
  });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  MatrixX<Scalar> y = a.value().array().tanh().matrix();
  const Var<Scalar> out = a.tape->next();
  return a.tape->record(std::move(y), {a}, [a, out](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
    const auto& yv = tp.value(out);
    tp.accumulate(a, g.cwiseProduct((Scalar(1) - yv.array().square()).matrix()));
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  MatrixX<Scalar> y = a.value().cwiseMax(Scalar(0));
  return a.tape->record(std::move(y), {a}, [a](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
    const auto& x = tp.value(a);
    tp.accumulate(a, (x.array() > Scalar(0)).select(g, Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  return a.tape->record(a.value().transpose(), {a},
                        [a](Tape<Scalar>& tp, const MatrixX<Scalar>& g) { tp.accumulate(a, g.transpose()); });
}

/// Sum of every element, as a 1x1 matrix.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  MatrixX<Scalar> s(1, 1);
  s(0, 0) = a.value().sum();
  return a.tape->record(std::move(s), {a}, [a](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
    const auto& x = tp.value(a);
    tp.accumulate(a, MatrixX<Scalar>::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

/// Column means over rows: (n x d) -> 1 x d.
template <typename Scalar>
Var<Scalar> mean_rows(Var<Scalar> a) {
  const Scalar n = static_cast<Scalar>(a.rows());
  return a.tape->record(a.value().colwise().mean(), {a},
                        [a, n](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          const auto rows = tp.value(a).rows();
                          tp.accumulate(a, (g / n).replicate(rows, 1));
                        });
}

/// Column maxima over rows: (n x d) -> 1 x d. Ties route to the first row.
template <typename Scalar>
Var<Scalar> max_rows(Var<Scalar> a) {
  const auto& x = a.value();
  detail::require(x.rows() >= 1, "max_rows: empty input");
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(x.cols()));
  MatrixX<Scalar> y(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < x.rows(); ++i) {
      if (x(i, j) > x(best, j)) best = i;
    }
    argmax[static_cast<std::size_t>(j)] = best;
    y(0, j) = x(best, j);
  }
  return a.tape->record(std::move(y), {a},
                        [a, argmax](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          const auto& xv = tp.value(a);
                          MatrixX<Scalar> d = MatrixX<Scalar>::Zero(xv.rows(), xv.cols());
                          for (Eigen::Index j = 0; j < xv.cols(); ++j) {
                            d(argmax[static_cast<std::size_t>(j)], j) = g(0, j);
                          }
                          tp.accumulate(a, d);
                        });
}

template <typename Scalar>
MatrixX<Scalar> softmax_rows_value(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  const Var<Scalar> out = a.tape->next();
  return a.tape->record(softmax_rows_value<Scalar>(a.value()), {a},
                        [a, out](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          const auto& y = tp.value(out);
                          MatrixX<Scalar> d(y.rows(), y.cols());
                          for (Eigen::Index i = 0; i < y.rows(); ++i) {
                            const Scalar dot = g.row(i).dot(y.row(i));
                            d.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
                          }
                          tp.accumulate(a, d);
                        });
}

/// Row-wise layer normalization with learned 1 x d gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm_rows(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias,
                            Scalar eps = Scalar(1e-5)) {
  const auto& xv = x.value();
  detail::require(gain.cols() == xv.cols() && bias.cols() == xv.cols(),
                  "layer_norm_rows: parameter width mismatch");
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  MatrixX<Scalar> xhat(n, d);
  std::vector<Scalar> inv_std(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mu = xv.row(i).mean();
    const Scalar var = (xv.row(i).array() - mu).square().mean();
    inv_std[static_cast<std::size_t>(i)] = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std[static_cast<std::size_t>(i)];
  }
  MatrixX<Scalar> y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += bias.value().row(0);
  return x.tape->record(
      std::move(y), {x, gain, bias},
      [x, gain, bias, xhat, inv_std](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
        const Eigen::Index rows = xhat.rows();
        const Scalar width = static_cast<Scalar>(xhat.cols());
        if (tp.requires_grad(gain)) tp.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
        if (tp.requires_grad(x)) {
          const auto& gv = tp.value(gain);
          MatrixX<Scalar> dx(rows, xhat.cols());
          for (Eigen::Index i = 0; i < rows; ++i) {
            RowVectorX<Scalar> dxhat = g.row(i).cwiseProduct(gv.row(0));
            const Scalar s1 = dxhat.sum();
            const Scalar s2 = dxhat.dot(xhat.row(i));
            dx.row(i) = (inv_std[static_cast<std::size_t>(i)] / width) *
                        (width * dxhat.array() - s1 - xhat.row(i).array() * s2).matrix();
          }
          tp.accumulate(x, dx);
        }
      });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: width mismatch");
    rows += p.rows();
  }
  MatrixX<Scalar> out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts.front().tape->record(std::move(out), parts,
                                    [parts](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                                      Eigen::Index r0 = 0;
                                      for (const auto& p : parts) {
                                        const auto h = tp.value(p).rows();
                                        tp.accumulate(p, g.middleRows(r0, h));
                                        r0 += h;
                                      }
                                    });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: height mismatch");
    cols += p.cols();
  }
  MatrixX<Scalar> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape->record(std::move(out), parts,
                                    [parts](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                                      Eigen::Index c0 = 0;
                                      for (const auto& p : parts) {
                                        const auto w = tp.value(p).cols();
                                        tp.accumulate(p, g.middleCols(c0, w));
                                        c0 += w;
                                      }
                                    });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  return a.tape->record(a.value().middleRows(start, count), {a},
                        [a, start, count](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          const auto& x = tp.value(a);
                          MatrixX<Scalar> d = MatrixX<Scalar>::Zero(x.rows(), x.cols());
                          d.middleRows(start, count) = g;
                          tp.accumulate(a, d);
                        });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  return a.tape->record(a.value().middleCols(start, count), {a},
                        [a, start, count](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                          const auto& x = tp.value(a);
                          MatrixX<Scalar> d = MatrixX<Scalar>::Zero(x.rows(), x.cols());
                          d.middleCols(start, count) = g;
                          tp.accumulate(a, d);
                        });
}

/// Negative log softmax probability of `label` for a 1 x C logit row.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, int label) {
  const auto& z = logits.value();
  detail::require(z.rows() == 1, "softmax_cross_entropy: expects a single logit row");
  detail::require(label >= 0 && label < z.cols(), "softmax_cross_entropy: label out of range");
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + std::log((z.array() - m).exp().sum());
  MatrixX<Scalar> loss(1, 1);
  loss(0, 0) = lse - z(0, label);
  return logits.tape->record(std::move(loss), {logits},
                             [logits, label](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                               MatrixX<Scalar> p = softmax_rows_value<Scalar>(tp.value(logits));
                               p(0, label) -= Scalar(1);
                               tp.accumulate(logits, p * g(0, 0));
                             });
}

}  // namespace emotint
