#pragma once

// Heterogeneous message-passing reasoning head: refreshes the evidence graph
// from prompt outputs, fuses text and graph vectors with a bidirectional GRU,
// gates the knowledge blocks and scores the choice.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/structure_prompt.hpp"

namespace gsap {

struct HmprConfig {
  Eigen::Index fusion_dim = 64;  // d_f
  bool use_bigru = true;
  bool use_knowledge_attention = true;
};

struct FusionGroups {
  ag::Var context;  // 1 x 4 d_f
  ag::Var question;  // T_a
  ag::Var choice;    // T_c
  ag::Var evidence;  // T_k
  ag::Var graph;     // T_g
};

struct KnowledgeGates {
  ag::Var ka, kc, ga, gc;  // 1 x 1 each
  ag::Var fused;           // t*, 1 x 4 d_f
};

class Hmpr {
 public:
  Hmpr() = default;
  Hmpr(nn::ParamStore& store, const std::string& name, const HmprConfig& cfg, Eigen::Index text_dim,
       Eigen::Index graph_dim, nn::ParamGroup lm_group = nn::ParamGroup::kLanguageSide,
       nn::ParamGroup group = nn::ParamGroup::kGraph)
      : cfg_(cfg), text_dim_(text_dim), graph_dim_(graph_dim) {
    const auto df = cfg.fusion_dim;
    refresh_ = nn::Linear(store, name + ".refresh_proj", text_dim, graph_dim, lm_group);
    text_proj_ = nn::Linear(store, name + ".text_proj", text_dim, df, group);
    graph_proj_ = nn::Linear(store, name + ".graph_proj", graph_dim, df, group);
    const auto step_in = df + text_dim + graph_dim;
    forward_cell_ = nn::GRUCell(store, name + ".gru_fw", step_in, df, group);
    backward_cell_ = nn::GRUCell(store, name + ".gru_bw", step_in, df, group);
    context_ = nn::Linear(store, name + ".context", 2 * df, 4 * df, group);
    score_ = nn::Linear(store, name + ".W_h", 4 * df, 1, group, false);
  }

  const HmprConfig& config() const { return cfg_; }
  const nn::Linear& score_layer() const { return score_; }
  const nn::Linear& context_layer() const { return context_; }

  /// Node features with every triplet entity replaced by the projected,
  /// normalized mean of its entity-slot outputs. Rows follow g.nodes.
  ag::Var refresh_features(const EvidenceGraph& g, const std::vector<QCTriplet>& triplets,
                           const std::map<int, TripletOutput>& outputs, const ag::Var& features) const {
    std::map<int, std::vector<ag::Var>> by_node;  // node id -> outputs
    for (const auto& [rank, out] : outputs) {
      const auto& t = triplets.at(static_cast<std::size_t>(rank));
      if (out.head) by_node[t.head].push_back(*out.head);
      if (out.tail) by_node[t.tail].push_back(*out.tail);
    }
    if (by_node.empty()) return features;
    std::vector<ag::Var> rows;
    rows.reserve(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      auto it = by_node.find(g.nodes[i].id);
      if (it == by_node.end()) {
        rows.push_back(ag::slice_rows(features, static_cast<Eigen::Index>(i), 1));
      } else {
        ag::Var mean = ag::mean_rows(ag::concat_rows(it->second));
        rows.push_back(refresh_.forward(ag::l2_normalize_rows(mean)));
      }
    }
    return ag::concat_rows(rows);
  }

  /// g' from re-encoding the refreshed graph.
  ag::Var refresh_graph(GraphEncoder& encoder, const EvidenceGraph& g, const std::vector<QCTriplet>& triplets,
                        const std::map<int, TripletOutput>& outputs, const ag::Var& features,
                        const ag::Var& relevance) const {
    return encoder.encode(g, refresh_features(g, triplets, outputs, features), relevance).graph_vector;
  }

  /// h*: normalized sum of the three segment embeddings.
  static ag::Var textual_summary(const SegmentEmbeddings& seg) {
    return ag::l2_normalize_rows(ag::add(ag::add(seg.question, seg.choice), seg.evidence));
  }

  /// Four-step sequence [T_q, T_c, T_k, g'] (each projected to d_f and
  /// concatenated with [h*; g']) through a bidirectional GRU; the last
  /// forward and first backward states are mapped to the 4 d_f context.
  FusionGroups fuse(const SegmentEmbeddings& seg, const ag::Var& summary, const ag::Var& graph_vec) const {
    const auto df = cfg_.fusion_dim;
    std::vector<ag::Var> projected{text_proj_.forward(seg.question), text_proj_.forward(seg.choice),
                                   text_proj_.forward(seg.evidence), graph_proj_.forward(graph_vec)};
    ag::Var context;
    if (!cfg_.use_bigru) {
      context = ag::concat_cols(projected);
    } else {
      std::vector<ag::Var> steps;
      for (const auto& p : projected) steps.push_back(ag::concat_cols({p, summary, graph_vec}));
      ag::Var fw = ag::constant(ag::Matrix::Zero(1, df));
      for (const auto& s : steps) fw = forward_cell_.step(s, fw);
      ag::Var bw = ag::constant(ag::Matrix::Zero(1, df));
      for (auto it = steps.rbegin(); it != steps.rend(); ++it) bw = backward_cell_.step(*it, bw);
      context = context_.forward(ag::concat_cols({fw, bw}));
    }
    return split(context);
  }

  FusionGroups split(const ag::Var& context) const {
    const auto df = cfg_.fusion_dim;
    return {context, ag::slice_cols(context, 0, df), ag::slice_cols(context, df, df),
            ag::slice_cols(context, 2 * df, df), ag::slice_cols(context, 3 * df, df)};
  }

  KnowledgeGates knowledge_attention(const FusionGroups& g) const {
    auto gate = [&](const ag::Var& x, const ag::Var& y) {
      if (!cfg_.use_knowledge_attention) return ag::scalar(0.5);
      return ag::sigmoid(ag::scale(ag::matmul(x, ag::transpose(y)),
                                   1.0 / std::sqrt(static_cast<double>(cfg_.fusion_dim))));
    };
    KnowledgeGates out{gate(g.evidence, g.question), gate(g.evidence, g.choice), gate(g.graph, g.question),
                       gate(g.graph, g.choice), {}};
    out.fused = ag::concat_cols({g.question, g.choice, ag::mul_scalar(g.evidence, ag::add(out.ka, out.kc)),
                                 ag::mul_scalar(g.graph, ag::add(out.ga, out.gc))});
    return out;
  }

  /// Pre-activation choice logit w_h . t* (1 x 1). The reported score is its ReLU.
  ag::Var logit(const ag::Var& fused) const { return score_.forward(fused); }

 private:
  HmprConfig cfg_;
  Eigen::Index text_dim_ = 0;
  Eigen::Index graph_dim_ = 0;
  nn::Linear refresh_;
  nn::Linear text_proj_;
  nn::Linear graph_proj_;
  nn::GRUCell forward_cell_;
  nn::GRUCell backward_cell_;
  nn::Linear context_;
  nn::Linear score_;
};

/// o = ReLU(logits) and its argmax. Equal scores (notably several zeros) are
/// ordered by the pre-activation logit, then by lowest index.
struct ChoiceScores {
  std::vector<double> scores;
  int prediction = 0;
};

inline ChoiceScores score_choices(const ag::RowVector& logits) {
  ChoiceScores out;
  for (Eigen::Index i = 0; i < logits.size(); ++i) out.scores.push_back(std::max(0.0, logits(i)));
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    const auto best = static_cast<std::size_t>(out.prediction);
    const bool higher = out.scores[i] > out.scores[best];
    const bool tie_break = out.scores[i] == out.scores[best] &&
                           logits(static_cast<Eigen::Index>(i)) > logits(static_cast<Eigen::Index>(best));
    if (higher || tie_break) out.prediction = static_cast<int>(i);
  }
  return out;
}

}  // namespace gsap
