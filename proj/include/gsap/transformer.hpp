#pragma once

// Small post-norm transformer encoder. Its parameters live in the frozen
// group: gradients flow through it to whatever feeds its inputs, but never
// into its own weights.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"

namespace gsap {

inline constexpr int kMaxSequenceLength = 256;

struct TransformerConfig {
  Eigen::Index hidden = 128;
  int layers = 4;
  int heads = 4;
  Eigen::Index ffn = 512;
  int max_len = kMaxSequenceLength;
};

class FrozenEncoder {
 public:
  struct Block {
    nn::Linear wq, wk, wv, wo;
    nn::LayerNorm ln_attn;
    nn::Linear ffn_in, ffn_out;
    nn::LayerNorm ln_ffn;
  };

  FrozenEncoder() = default;
  FrozenEncoder(nn::ParamStore& store, const std::string& name, const TransformerConfig& cfg,
                std::size_t vocab_size, nn::ParamGroup group = nn::ParamGroup::kFrozen)
      : cfg_(cfg) {
    if (cfg.hidden % cfg.heads != 0) {
      throw Error(ErrorCode::kInvalidArgument, "transformer hidden size must divide by head count");
    }
    tokens_ = store.add_normal(name + ".tok_emb", static_cast<Eigen::Index>(vocab_size), cfg.hidden, 1.0, group);
    positions_ = store.add_normal(name + ".pos_emb", cfg.max_len, cfg.hidden, 0.1, group);
    ln_emb_ = nn::LayerNorm(store, name + ".ln_emb", cfg.hidden, group);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = name + ".block" + std::to_string(l);
      const auto h = cfg.hidden;
      blocks_.push_back({nn::Linear(store, p + ".wq", h, h, group), nn::Linear(store, p + ".wk", h, h, group),
                         nn::Linear(store, p + ".wv", h, h, group), nn::Linear(store, p + ".wo", h, h, group),
                         nn::LayerNorm(store, p + ".ln_attn", h, group),
                         nn::Linear(store, p + ".ffn_in", h, cfg.ffn, group),
                         nn::Linear(store, p + ".ffn_out", cfg.ffn, h, group),
                         nn::LayerNorm(store, p + ".ln_ffn", h, group)});
    }
  }

  const TransformerConfig& config() const { return cfg_; }
  Eigen::Index hidden() const { return cfg_.hidden; }
  int num_layers() const { return static_cast<int>(blocks_.size()); }
  const ag::Var& token_table() const { return tokens_; }
  std::vector<Block>& blocks() { return blocks_; }

  /// Token plus position embeddings, layer-normalized (n x H).
  ag::Var embed(std::span<const int> ids) const {
    if (static_cast<int>(ids.size()) > cfg_.max_len) {
      throw Error(ErrorCode::kSequenceOverflow, "sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                                                    std::to_string(cfg_.max_len));
    }
    std::vector<int> idx(ids.begin(), ids.end());
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    ag::Var x = ag::add(ag::gather_rows(tokens_, std::move(idx)), ag::gather_rows(positions_, std::move(pos)));
    return ln_emb_.forward(x);
  }

  /// One transformer block over the whole sequence; every position attends
  /// to every other.
  ag::Var layer(const ag::Var& x, int l) const {
    const auto& b = blocks_.at(static_cast<std::size_t>(l));
    const Eigen::Index dh = cfg_.hidden / cfg_.heads;
    ag::Var q = b.wq.forward(x);
    ag::Var k = b.wk.forward(x);
    ag::Var v = b.wv.forward(x);
    std::vector<ag::Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg_.heads; ++h) {
      ag::Var qh = ag::slice_cols(q, h * dh, dh);
      ag::Var kh = ag::slice_cols(k, h * dh, dh);
      ag::Var vh = ag::slice_cols(v, h * dh, dh);
      ag::Var att = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), scale));
      heads.push_back(ag::matmul(att, vh));
    }
    ag::Var attn = b.wo.forward(cfg_.heads == 1 ? heads.front() : ag::concat_cols(heads));
    ag::Var x1 = b.ln_attn.forward(ag::add(x, attn));
    ag::Var f = b.ffn_out.forward(ag::gelu(b.ffn_in.forward(x1)));
    return b.ln_ffn.forward(ag::add(x1, f));
  }

  /// Plain forward over tokens with no prompts (final layer states).
  ag::Var forward(std::span<const int> ids) const {
    ag::Var x = embed(ids);
    for (int l = 0; l < num_layers(); ++l) x = layer(x, l);
    return x;
  }

  /// Mean of final-layer states; used as the frozen text embedder.
  ag::RowVector pooled(std::span<const int> ids) const {
    if (ids.empty()) return ag::RowVector::Zero(cfg_.hidden);
    return forward(ids).value().colwise().mean();
  }

 private:
  TransformerConfig cfg_;
  ag::Var tokens_;
  ag::Var positions_;
  nn::LayerNorm ln_emb_;
  std::vector<Block> blocks_;
};

}  // namespace gsap
