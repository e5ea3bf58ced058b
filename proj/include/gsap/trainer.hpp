#pragma once

// Cross-entropy training with AdamW, two learning-rate groups, linear warmup,
// global-norm clipping and best-dev restore.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/dataset.hpp"
#include "gsap/hmpr.hpp"

namespace gsap {

struct TrainConfig {
  double lr_lm_side = 1e-5;
  double lr_graph = 1e-4;
  int epochs = 6;
  int warmup_steps = 600;
  int grad_accum = 1;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long max_steps = -1;  // stop after this many optimizer steps; < 0 means no limit

  void validate() const {
    if (!(lr_lm_side > 0.0) || !(lr_graph > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "learning rates must be > 0");
    }
    if (epochs < 0 || warmup_steps < 0 || grad_accum < 1 || batch_size < 1) {
      throw Error(ErrorCode::kInvalidArgument, "epochs/warmup must be >= 0 and grad_accum/batch_size >= 1");
    }
  }
};

/// -log softmax(scores)[gold].
inline double loss(const ag::RowVector& scores, int gold) {
  return ag::cross_entropy(ag::constant(ag::Matrix(scores)), gold).item();
}

/// Anything that maps an instance to 1 x b logits over a ParamStore.
template <class M>
concept TrainableModel = requires(M m, const QAInstance& qa, bool flag) {
  { m.forward(qa) } -> std::convertible_to<ag::Var>;
  { m.params() } -> std::convertible_to<nn::ParamStore&>;
  m.set_training(flag);
};

class AdamW {
 public:
  AdamW(nn::ParamStore& store, const TrainConfig& cfg) : store_(store), cfg_(cfg) {}

  double lr_scale(long step) const {
    if (cfg_.warmup_steps <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup_steps));
  }

  double group_lr(nn::ParamGroup g) const {
    return g == nn::ParamGroup::kLanguageSide ? cfg_.lr_lm_side : cfg_.lr_graph;
  }

  /// Applies one update from the accumulated gradients (divided by `count`),
  /// then clears them. Returns the pre-clip global gradient norm.
  double step(double count = 1.0) {
    double sq = 0.0;
    for (auto& p : store_.all()) {
      if (!p.trainable() || !p.var.has_grad()) continue;
      sq += (p.var.grad() / count).squaredNorm();
    }
    const double norm = std::sqrt(sq);
    double clip = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
    ++t_;
    const double scale = lr_scale(t_ - 1);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : store_.all()) {
      if (!p.trainable()) continue;
      auto& st = state_[p.name];
      if (st.m.size() == 0) {
        st.m = ag::Matrix::Zero(p.var.rows(), p.var.cols());
        st.v = ag::Matrix::Zero(p.var.rows(), p.var.cols());
      }
      const double lr = group_lr(p.group) * scale;
      ag::Matrix& w = p.var.mutable_value();
      w *= 1.0 - lr * cfg_.weight_decay;
      if (p.var.has_grad()) {
        const ag::Matrix g = p.var.grad() * (clip / count);
        st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
        st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      } else {
        st.m *= cfg_.beta1;
        st.v *= cfg_.beta2;
      }
      w.array() -= lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + cfg_.adam_eps);
    }
    store_.zero_grad();
    return norm;
  }

  long steps() const { return t_; }

 private:
  struct State {
    ag::Matrix m, v;
  };
  nn::ParamStore& store_;
  TrainConfig cfg_;
  long t_ = 0;
  std::unordered_map<std::string, State> state_;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t ungrounded = 0;  // counted as wrong
};

/// Accuracy over the dataset; instances whose question has no entity in the
/// knowledge store count as wrong.
template <TrainableModel M>
EvalResult evaluate(M& model, const std::vector<QAInstance>& data) {
  if (data.empty()) throw Error(ErrorCode::kEmptyDataset, "evaluate: empty dataset");
  model.set_training(false);
  EvalResult r;
  r.total = data.size();
  for (const auto& qa : data) {
    try {
      const auto pred = score_choices(model.forward(qa).value().row(0)).prediction;
      if (pred == qa.answer_index) ++r.correct;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kQuestionUngrounded) throw;
      ++r.ungrounded;
    }
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

struct MetricRecord {
  int epoch = 0;
  long step = 0;
  double train_loss = 0.0;
  std::optional<double> dev_acc;

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch}, {"step", step}, {"train_loss", train_loss}};
    j["dev_acc"] = dev_acc ? nlohmann::json(*dev_acc) : nlohmann::json(nullptr);
    return j;
  }
};

struct TrainResult {
  std::vector<MetricRecord> log;
  long steps = 0;
  double best_dev_acc = -1.0;
  int best_epoch = -1;
  std::size_t skipped_ungrounded = 0;
};

namespace detail {

inline std::vector<ag::Matrix> snapshot_state(const nn::ParamStore& store) {
  std::vector<ag::Matrix> out;
  for (const auto& p : store.all()) {
    if (p.group != nn::ParamGroup::kFrozen) out.push_back(p.var.value());
  }
  return out;
}

inline void restore_state(nn::ParamStore& store, const std::vector<ag::Matrix>& snap) {
  std::size_t i = 0;
  for (auto& p : store.all()) {
    if (p.group != nn::ParamGroup::kFrozen) p.var.mutable_value() = snap.at(i++);
  }
}

}  // namespace detail

/// Trains in place. One metric record per epoch (written to `log` as JSONL
/// when given). With a dev set the best epoch's parameters are restored.
template <TrainableModel M>
TrainResult train(M& model, const std::vector<QAInstance>& data, const TrainConfig& cfg,
                  const std::vector<QAInstance>* dev = nullptr, std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyDataset, "train: empty dataset");
  TrainResult result;
  nn::ParamStore& store = model.params();
  AdamW opt(store, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::optional<std::vector<ag::Matrix>> best;
  const int per_update = cfg.batch_size * cfg.grad_accum;
  store.zero_grad();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps >= 0 && opt.steps() >= cfg.max_steps) break;
    std::shuffle(order.begin(), order.end(), rng);
    model.set_training(true);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    int pending = 0;
    for (std::size_t idx : order) {
      const QAInstance& qa = data[idx];
      ag::Var logits;
      try {
        logits = model.forward(qa);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kQuestionUngrounded) throw;
        ++result.skipped_ungrounded;
        continue;
      }
      ag::Var l = ag::cross_entropy(logits, qa.answer_index);
      if (!std::isfinite(l.item())) {
        throw Error(ErrorCode::kNanLoss, "non-finite loss at step " + std::to_string(opt.steps()) +
                                             " on instance " + qa.id);
      }
      ag::backward(l);
      loss_sum += l.item();
      ++loss_count;
      if (++pending == per_update) {
        opt.step(pending);
        pending = 0;
        if (cfg.max_steps >= 0 && opt.steps() >= cfg.max_steps) break;
      }
    }
    if (pending > 0) opt.step(pending);

    MetricRecord rec;
    rec.epoch = epoch;
    rec.step = opt.steps();
    rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (dev && !dev->empty()) {
      rec.dev_acc = evaluate(model, *dev).accuracy;
      if (*rec.dev_acc > result.best_dev_acc) {
        result.best_dev_acc = *rec.dev_acc;
        result.best_epoch = epoch;
        best = detail::snapshot_state(store);
      }
    }
    result.log.push_back(rec);
    if (log) *log << rec.to_json().dump() << '\n' << std::flush;
  }
  if (best) detail::restore_state(store, *best);
  model.set_training(false);
  result.steps = opt.steps();
  return result;
}

}  // namespace gsap
