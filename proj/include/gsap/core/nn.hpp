#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"

namespace gsap::nn {

using ag::Matrix;
using ag::Var;

/// Which optimizer group a tensor belongs to. Frozen tensors never receive
/// gradients; buffers are non-trainable state (e.g. running statistics).
enum class ParamGroup { kFrozen, kLanguageSide, kGraph, kBuffer };

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kFrozen: return "frozen";
    case ParamGroup::kLanguageSide: return "lm";
    case ParamGroup::kGraph: return "graph";
    case ParamGroup::kBuffer: return "buffer";
  }
  return "?";
}

struct Parameter {
  std::string name;
  ParamGroup group;
  Var var;

  bool trainable() const { return group == ParamGroup::kLanguageSide || group == ParamGroup::kGraph; }
};

/// Owns every named tensor of a model. Components keep Var handles that share
/// storage with the entries here.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Var add(const std::string& name, Matrix init, ParamGroup group) {
    if (find(name) != nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name: " + name);
    }
    const bool trainable = group == ParamGroup::kLanguageSide || group == ParamGroup::kGraph;
    Var v(std::move(init), trainable);
    params_.push_back({name, group, v});
    return v;
  }

  /// Gaussian init with the given standard deviation.
  Var add_normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev,
                 ParamGroup group) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return add(name, std::move(m), group);
  }

  /// Glorot-style init for an (in x out) weight.
  Var add_glorot(const std::string& name, Eigen::Index in, Eigen::Index out, ParamGroup group) {
    return add_normal(name, in, out, std::sqrt(2.0 / static_cast<double>(in + out)), group);
  }

  Var add_zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group) {
    return add(name, Matrix::Zero(rows, cols), group);
  }

  Var add_ones(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group) {
    return add(name, Matrix::Ones(rows, cols), group);
  }

  const Parameter* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  Parameter* find(std::string_view name) {
    for (auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  std::mt19937_64& rng() { return rng_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.trainable()) n += static_cast<std::size_t>(p.var.value().size());
    }
    return n;
  }

 private:
  std::vector<Parameter> params_;
  std::mt19937_64 rng_;
};

/// Affine map x W + b on row-major batches (n x in) -> (n x out).
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, ParamGroup group,
         bool bias = true)
      : weight_(store.add_glorot(name + ".weight", in, out, group)) {
    if (bias) bias_ = store.add_zeros(name + ".bias", 1, out, group);
  }

  Var forward(const Var& x) const {
    if (x.cols() != weight_.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "Linear: input has " + std::to_string(x.cols()) +
                                                     " columns, expected " + std::to_string(weight_.rows()));
    }
    Var y = ag::matmul(x, weight_);
    return bias_.defined() ? ag::add_row(y, bias_) : y;
  }

  Eigen::Index in_dim() const { return weight_.rows(); }
  Eigen::Index out_dim() const { return weight_.cols(); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  bool has_bias() const { return bias_.defined(); }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim, ParamGroup group)
      : gamma_(store.add_ones(name + ".gamma", 1, dim, group)),
        beta_(store.add_zeros(name + ".beta", 1, dim, group)) {}

  Var forward(const Var& x) const { return ag::layer_norm_rows(x, gamma_, beta_); }

 private:
  Var gamma_;
  Var beta_;
};

/// Batch normalization over the row axis with running statistics.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& name, Eigen::Index dim, ParamGroup group,
            double momentum = 0.1, double eps = 1e-5)
      : gamma_(store.add_ones(name + ".gamma", 1, dim, group)),
        beta_(store.add_zeros(name + ".beta", 1, dim, group)),
        running_mean_(store.add_zeros(name + ".running_mean", 1, dim, ParamGroup::kBuffer)),
        running_var_(store.add_ones(name + ".running_var", 1, dim, ParamGroup::kBuffer)),
        momentum_(momentum),
        eps_(eps) {}

  /// Training mode normalizes by batch statistics and updates the running
  /// estimates; evaluation mode uses the running estimates.
  Var forward(const Var& x, bool training) {
    if (training) {
      ag::RowVector mean;
      ag::RowVector var;
      Var y = ag::batch_norm_train(x, gamma_, beta_, eps_, &mean, &var);
      if (mean.size() != 0) {
        const double n = static_cast<double>(x.rows());
        running_mean_.mutable_value() = (1 - momentum_) * running_mean_.value() + momentum_ * Matrix(mean);
        running_var_.mutable_value() =
            (1 - momentum_) * running_var_.value() + momentum_ * Matrix(var * (n / (n - 1)));
      }
      return y;
    }
    return eval_forward(x);
  }

  Var eval_forward(const Var& x) const {
    Var centered = ag::add_row(x, ag::constant(Matrix(-running_mean_.value())));
    Var xhat = ag::mul_row(centered, ag::constant(Matrix((running_var_.value().array() + eps_).rsqrt())));
    return ag::add_row(ag::mul_row(xhat, gamma_), beta_);
  }

  const Var& gamma() const { return gamma_; }
  const Var& beta() const { return beta_; }
  const Var& running_mean() const { return running_mean_; }
  const Var& running_var() const { return running_var_; }
  double eps() const { return eps_; }

 private:
  Var gamma_;
  Var beta_;
  Var running_mean_;
  Var running_var_;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

/// Gated recurrent unit cell (reset gate applied to the hidden projection).
class GRUCell {
 public:
  GRUCell() = default;
  GRUCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, ParamGroup group)
      : x_reset_(store, name + ".x_reset", in, hidden, group),
        x_update_(store, name + ".x_update", in, hidden, group),
        x_cand_(store, name + ".x_cand", in, hidden, group),
        h_reset_(store, name + ".h_reset", hidden, hidden, group),
        h_update_(store, name + ".h_update", hidden, hidden, group),
        h_cand_(store, name + ".h_cand", hidden, hidden, group),
        hidden_(hidden) {}

  Var step(const Var& x, const Var& h) const {
    Var r = ag::sigmoid(ag::add(x_reset_.forward(x), h_reset_.forward(h)));
    Var z = ag::sigmoid(ag::add(x_update_.forward(x), h_update_.forward(h)));
    Var n = ag::tanh(ag::add(x_cand_.forward(x), ag::mul(r, h_cand_.forward(h))));
    // (1 - z) * n + z * h
    return ag::add(n, ag::mul(z, ag::sub(h, n)));
  }

  Eigen::Index hidden() const { return hidden_; }

 private:
  Linear x_reset_, x_update_, x_cand_;
  Linear h_reset_, h_update_, h_cand_;
  Eigen::Index hidden_ = 0;
};

}  // namespace gsap::nn
