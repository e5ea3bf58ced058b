#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix of doubles. Vectors are 1 x n rows unless an
// op says otherwise. A Var is a shared handle to a node on the tape; the tape
// is the DAG of parents, freed when the last handle to the root goes away.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gsap/core/error.hpp"

namespace gsap::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) { return Var(std::move(value), false); }

inline Var constant_row(const Eigen::VectorXd& v) { return Var(Matrix(v.transpose()), false); }

inline Var scalar(double v) { return Var(Matrix::Constant(1, 1, v), false); }

namespace detail {

inline void check(bool ok, const char* op, const Var& a, const Var& b) {
  if (!ok) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Builds a result node. Parents are recorded only when some parent needs a
// gradient, so constant subgraphs do not hold on to their inputs.
inline Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  Var out(std::move(value), false);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(inputs.size());
    for (auto& in : inputs) node.parents.push_back(in.node());
    node.backward_fn = std::move(fn);
  }
  return out;
}

inline void push(Node& self, std::size_t i, const Matrix& g) {
  auto& p = *self.parents[i];
  if (p.requires_grad) p.accumulate(g);
}

inline bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace detail

/// Runs backpropagation from a 1x1 root, seeding d(root)/d(root) = 1.
inline void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "backward: root must be 1x1");
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Free interior gradients; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  detail::check(a.cols() == b.rows(), "matmul", a, b);
  Matrix out = a.value() * b.value();
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (detail::wants(self, 0)) detail::push(self, 0, self.grad * bv.transpose());
    if (detail::wants(self, 1)) detail::push(self, 1, av.transpose() * self.grad);
  });
}

inline Var transpose(const Var& a) {
  return detail::make(a.value().transpose(), {a},
                      [](Node& self) { detail::push(self, 0, self.grad.transpose()); });
}

inline Var add(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  return detail::make(a.value() + b.value(), {a, b}, [](Node& self) {
    detail::push(self, 0, self.grad);
    detail::push(self, 1, self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  return detail::make(a.value() - b.value(), {a, b}, [](Node& self) {
    detail::push(self, 0, self.grad);
    detail::push(self, 1, -self.grad);
  });
}

/// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  detail::check(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return detail::make(std::move(out), {a, row}, [](Node& self) {
    detail::push(self, 0, self.grad);
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.colwise().sum());
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    if (detail::wants(self, 0)) detail::push(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make(a.value() * s, {a}, [s](Node& self) { detail::push(self, 0, self.grad * s); });
}

/// a (n x m) scaled row-wise by c (n x 1).
inline Var mul_col(const Var& a, const Var& c) {
  detail::check(c.cols() == 1 && c.rows() == a.rows(), "mul_col", a, c);
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return detail::make(std::move(out), {a, c}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& cv = self.parents[1]->value;
    if (detail::wants(self, 0)) {
      detail::push(self, 0, Matrix(self.grad.array().colwise() * cv.col(0).array()));
    }
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.cwiseProduct(av).rowwise().sum());
  });
}

/// a (n x m) scaled column-wise by row (1 x m).
inline Var mul_row(const Var& a, const Var& row) {
  detail::check(row.rows() == 1 && row.cols() == a.cols(), "mul_row", a, row);
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return detail::make(std::move(out), {a, row}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& rv = self.parents[1]->value;
    if (detail::wants(self, 0)) {
      detail::push(self, 0, Matrix(self.grad.array().rowwise() * rv.row(0).array()));
    }
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.cwiseProduct(av).colwise().sum());
  });
}

/// a scaled by a 1x1 variable.
inline Var mul_scalar(const Var& a, const Var& s) {
  detail::check(s.rows() == 1 && s.cols() == 1, "mul_scalar", a, s);
  return detail::make(a.value() * s.item(), {a, s}, [](Node& self) {
    const double sv = self.parents[1]->value(0, 0);
    if (detail::wants(self, 0)) detail::push(self, 0, self.grad * sv);
    if (detail::wants(self, 1)) {
      detail::push(self, 1, Matrix::Constant(1, 1, self.grad.cwiseProduct(self.parents[0]->value).sum()));
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

inline Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return detail::make(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    detail::push(self, 0, Matrix((x.array() > 0.0).select(self.grad, 0.0)));
  });
}

inline Matrix sigmoid_value(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = sigmoid_value(a.value());
  return detail::make(out, {a}, [out](Node& self) {
    detail::push(self, 0, Matrix(self.grad.array() * out.array() * (1.0 - out.array())));
  });
}

inline Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return detail::make(out, {a}, [out](Node& self) {
    detail::push(self, 0, Matrix(self.grad.array() * (1.0 - out.array().square())));
  });
}

/// tanh-approximated GELU.
inline Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Matrix& x = a.value();
  Matrix inner = (c * (x.array() + 0.044715 * x.array().cube())).matrix();
  Matrix t = inner.array().tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return detail::make(std::move(out), {a}, [t, c](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    auto dinner = c * (1.0 + 3.0 * 0.044715 * xv.array().square());
    auto d = 0.5 * (1.0 + t.array()) + 0.5 * xv.array() * (1.0 - t.array().square()) * dinner;
    detail::push(self, 0, Matrix(self.grad.array() * d));
  });
}

// ---------------------------------------------------------------------------
// Normalizations and softmax

inline Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return detail::make(out, {a}, [out](Node& self) {
    Matrix dot = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = out.array() * (self.grad.colwise() - dot.col(0)).array();
    detail::push(self, 0, g);
  });
}

/// Softmax of an (n x 1) column within groups: entries sharing groups[i]
/// are normalized together.
inline Var segment_softmax(const Var& x, std::span<const int> groups, int num_groups) {
  if (x.cols() != 1 || static_cast<std::size_t>(x.rows()) != groups.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "segment_softmax: expected n x 1 scores");
  }
  const Eigen::Index n = x.rows();
  std::vector<double> maxv(num_groups, -std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) maxv[groups[i]] = std::max(maxv[groups[i]], x.value()(i, 0));
  Matrix out(n, 1);
  std::vector<double> denom(num_groups, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, 0) = std::exp(x.value()(i, 0) - maxv[groups[i]]);
    denom[groups[i]] += out(i, 0);
  }
  for (Eigen::Index i = 0; i < n; ++i) out(i, 0) /= denom[groups[i]];
  std::vector<int> gcopy(groups.begin(), groups.end());
  return detail::make(out, {x}, [out, gcopy = std::move(gcopy), num_groups](Node& self) {
    std::vector<double> dot(num_groups, 0.0);
    const Eigen::Index m = out.rows();
    for (Eigen::Index i = 0; i < m; ++i) dot[gcopy[i]] += self.grad(i, 0) * out(i, 0);
    Matrix g(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) g(i, 0) = out(i, 0) * (self.grad(i, 0) - dot[gcopy[i]]);
    detail::push(self, 0, g);
  });
}

/// Per-row layer normalization with affine gamma/beta (1 x m).
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  detail::check(gamma.cols() == x.cols() && beta.cols() == x.cols(), "layer_norm_rows", x, gamma);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  Matrix xhat(n, m);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return detail::make(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Matrix& gv = self.parents[1]->value;
    const Eigen::Index mm = xhat.cols();
    if (detail::wants(self, 0)) {
      Matrix dxhat = self.grad.array().rowwise() * gv.row(0).array();
      Matrix dx(xhat.rows(), mm);
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const double s1 = dxhat.row(r).sum();
        const double s2 = dxhat.row(r).dot(xhat.row(r));
        dx.row(r) = inv_std(r) / static_cast<double>(mm) *
                    (static_cast<double>(mm) * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2).matrix();
      }
      detail::push(self, 0, dx);
    }
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.cwiseProduct(xhat).colwise().sum());
    if (detail::wants(self, 2)) detail::push(self, 2, self.grad.colwise().sum());
  });
}

/// Column-wise normalization over the row (batch) axis using batch statistics.
/// A single-row batch passes through unnormalized (identity), then gamma/beta.
inline Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                            RowVector* batch_mean = nullptr, RowVector* batch_var = nullptr) {
  detail::check(gamma.cols() == x.cols() && beta.cols() == x.cols(), "batch_norm_train", x, gamma);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  Matrix xhat;
  RowVector inv_std = RowVector::Ones(m);
  const bool identity = n < 2;
  if (identity) {
    xhat = x.value();
  } else {
    RowVector mean = x.value().colwise().mean();
    Matrix centered = x.value().rowwise() - mean;
    RowVector var = centered.array().square().colwise().mean();
    inv_std = (var.array() + eps).rsqrt();
    xhat = centered.array().rowwise() * inv_std.array();
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return detail::make(std::move(out), {x, gamma, beta}, [xhat, inv_std, identity](Node& self) {
    const Matrix& gv = self.parents[1]->value;
    if (detail::wants(self, 0)) {
      Matrix dxhat = self.grad.array().rowwise() * gv.row(0).array();
      if (identity) {
        detail::push(self, 0, dxhat);
      } else {
        const double nn = static_cast<double>(xhat.rows());
        RowVector s1 = dxhat.colwise().sum();
        RowVector s2 = dxhat.cwiseProduct(xhat).colwise().sum();
        Matrix dx = ((nn * dxhat.array()).rowwise() - s1.array() - (xhat.array().rowwise() * s2.array()))
                        .rowwise() * (inv_std.array() / nn);
        detail::push(self, 0, dx);
      }
    }
    if (detail::wants(self, 1)) detail::push(self, 1, self.grad.cwiseProduct(xhat).colwise().sum());
    if (detail::wants(self, 2)) detail::push(self, 2, self.grad.colwise().sum());
  });
}

/// Rows scaled to unit L2 norm; rows with norm below eps map to zero.
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd norms = a.value().rowwise().norm();
  Matrix out = Matrix::Zero(n, a.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    if (norms(r) > eps) out.row(r) = a.value().row(r) / norms(r);
  }
  return detail::make(out, {a}, [out, norms, eps](Node& self) {
    Matrix g = Matrix::Zero(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      if (norms(r) <= eps) continue;
      const double d = self.grad.row(r).dot(out.row(r));
      g.row(r) = (self.grad.row(r) - d * out.row(r)) / norms(r);
    }
    detail::push(self, 0, g);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var concat_rows(const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    if (cols >= 0 && p.cols() != cols) detail::check(false, "concat_rows", parts.front(), p);
    cols = p.cols();
    rows += p.rows();
  }
  if (cols < 0) cols = parts.empty() ? 0 : parts.front().cols();
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    if (p.rows() == 0) continue;
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::make(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const Eigen::Index r = self.parents[i]->value.rows();
      if (r == 0 || !detail::wants(self, i)) continue;
      detail::push(self, i, self.grad.middleRows(offsets[i], r));
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  Eigen::Index rows = parts.empty() ? 0 : parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::check(false, "concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::make(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!detail::wants(self, i)) continue;
      detail::push(self, i, self.grad.middleCols(offsets[i], self.parents[i]->value.cols()));
    }
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "slice_rows out of range");
  }
  return detail::make(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
    g.middleRows(start, count) = self.grad;
    detail::push(self, 0, g);
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "slice_cols out of range");
  }
  return detail::make(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
    g.middleCols(start, count) = self.grad;
    detail::push(self, 0, g);
  });
}

inline Var gather_rows(const Var& a, std::vector<int> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  return detail::make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    detail::push(self, 0, g);
  });
}

/// out[idx[i]] += a[i]; out has num_rows rows.
inline Var scatter_add_rows(const Var& a, std::vector<int> idx, Eigen::Index num_rows) {
  Matrix out = Matrix::Zero(num_rows, a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += a.value().row(static_cast<Eigen::Index>(i));
  return detail::make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Matrix g(static_cast<Eigen::Index>(idx.size()), self.grad.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = self.grad.row(idx[i]);
    detail::push(self, 0, g);
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  return detail::make(a.value().colwise().mean(), {a}, [n](Node& self) {
    detail::push(self, 0, Matrix(self.grad.replicate(self.parents[0]->value.rows(), 1) / n));
  });
}

inline Var sum(const Var& a) {
  return detail::make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const auto& p = self.parents[0]->value;
    detail::push(self, 0, Matrix::Constant(p.rows(), p.cols(), self.grad(0, 0)));
  });
}

/// (n x m) . (n x m) -> (n x 1) of row dot products.
inline Var rowwise_dot(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "rowwise_dot", a, b);
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    if (detail::wants(self, 0)) {
      detail::push(self, 0, Matrix(self.parents[1]->value.array().colwise() * self.grad.col(0).array()));
    }
    if (detail::wants(self, 1)) {
      detail::push(self, 1, Matrix(self.parents[0]->value.array().colwise() * self.grad.col(0).array()));
    }
  });
}

/// Softmax cross-entropy of a 1 x b logit row against a gold index:
/// -log softmax(logits)[gold], computed with max subtraction.
inline Var cross_entropy(const Var& logits, int gold) {
  if (logits.rows() != 1 || gold < 0 || gold >= logits.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "cross_entropy: bad logits shape or gold index");
  }
  const RowVector z = logits.value().row(0);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  RowVector p = (z.array() - lse).exp();
  return detail::make(Matrix::Constant(1, 1, lse - z(gold)), {logits}, [p, gold](Node& self) {
    Matrix g = p;
    g(0, gold) -= 1.0;
    detail::push(self, 0, g * self.grad(0, 0));
  });
}

}  // namespace gsap::ag
