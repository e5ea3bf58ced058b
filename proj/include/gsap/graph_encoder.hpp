#pragma once

// Attention-based relational graph convolution over an EvidenceGraph.
//
// Each undirected edge becomes two directed message channels, and every node
// gets a self channel, so the aggregation for node n runs over N(n) and n.
// Per layer l:
//   m_un   = f_msg([h_u; v_u; r_un])
//   q_u    = f_q([h_u; v_u; f_lam(lambda_u)])
//   k_n|u  = f_k([h_n; v_n; f_lam(lambda_n); r_un])
//   a_un   = softmax_{u in N(n) + n}(q_u . k_n|u / sqrt(D))
//   h_n'   = BN(W_n sum_u a_un m_un) + h_n
// and the graph vector is the mean of the final node states.

#include <cmath>
#include <string>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/evidence_graph.hpp"

namespace gsap {

struct GraphEncoderConfig {
  Eigen::Index hidden = 300;
  int layers = 5;
  Eigen::Index node_type_dim = 32;
  Eigen::Index rel_type_dim = 32;
  Eigen::Index relevance_dim = 32;
  bool use_attention = true;   // false: uniform weights over N(n) + n
  bool use_relevance = true;   // false: relevance block is zeroed
};

/// A directed message channel src -> dst. Self channels have src == dst and
/// use the reserved self relation index.
struct MessageChannel {
  int src = 0;  // row index into the node list
  int dst = 0;
  int relation = 0;
};

struct TypeEmbeddings {
  ag::Var node_type;  // n x node_type_dim
  ag::Var relation;   // channels x rel_type_dim
};

struct AttentionWeight {
  int src_id = 0;
  int dst_id = 0;
  std::string relation;  // empty for the self channel
  double weight = 0.0;
};

struct GraphEncoding {
  ag::Var graph_vector;  // 1 x D
  ag::Var node_states;   // n x D, rows in g.nodes order
};

class GraphEncoder {
 public:
  struct Layer {
    nn::Linear message;
    nn::Linear query;
    nn::Linear key;
    nn::Linear update;
    nn::BatchNorm norm;
  };

  GraphEncoder() = default;
  GraphEncoder(nn::ParamStore& store, const std::string& name, const GraphEncoderConfig& cfg,
               std::vector<std::string> relation_vocab, nn::ParamGroup group = nn::ParamGroup::kGraph)
      : cfg_(cfg), relations_(std::move(relation_vocab)) {
    if (cfg.layers < 0) throw Error(ErrorCode::kInvalidArgument, "GraphEncoder: negative layer count");
    const auto rel_onehot = static_cast<Eigen::Index>(relations_.size()) + 1;
    node_type_ = nn::Linear(store, name + ".f_v", kNodeTypeCount, cfg.node_type_dim, group);
    rel_type_ = nn::Linear(store, name + ".f_r", 2 * kNodeTypeCount + rel_onehot, cfg.rel_type_dim, group);
    relevance_ = nn::Linear(store, name + ".f_lambda", 1, cfg.relevance_dim, group);
    const auto d = cfg.hidden;
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      layers_.push_back({nn::Linear(store, p + ".f_msg", d + cfg.node_type_dim + cfg.rel_type_dim, d, group),
                         nn::Linear(store, p + ".f_q", d + cfg.node_type_dim + cfg.relevance_dim, d, group),
                         nn::Linear(store, p + ".f_k", d + cfg.node_type_dim + cfg.relevance_dim + cfg.rel_type_dim, d,
                                    group),
                         nn::Linear(store, p + ".f_n", d, d, group), nn::BatchNorm(store, p + ".bn", d, group)});
    }
  }

  const GraphEncoderConfig& config() const { return cfg_; }
  const std::vector<std::string>& relation_vocab() const { return relations_; }
  int self_relation() const { return static_cast<int>(relations_.size()); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const nn::Linear& node_type_map() const { return node_type_; }
  const nn::Linear& rel_type_map() const { return rel_type_; }
  const nn::Linear& relevance_map() const { return relevance_; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  int relation_index(const std::string& label) const {
    for (std::size_t i = 0; i < relations_.size(); ++i) {
      if (relations_[i] == label) return static_cast<int>(i);
    }
    throw Error(ErrorCode::kUnknownRelation, "relation not in vocabulary: " + label);
  }

  /// Both orientations of every edge, then one self channel per node.
  std::vector<MessageChannel> channels(const EvidenceGraph& g) const {
    const auto index = g.id_to_index();
    std::vector<MessageChannel> out;
    out.reserve(2 * g.edges.size() + g.nodes.size());
    for (const auto& e : g.edges) {
      const int r = relation_index(e.relation);
      const int h = index.at(e.head);
      const int t = index.at(e.tail);
      out.push_back({h, t, r});
      out.push_back({t, h, r});
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      out.push_back({static_cast<int>(i), static_cast<int>(i), self_relation()});
    }
    return out;
  }

  TypeEmbeddings type_embeddings(const EvidenceGraph& g, const std::vector<MessageChannel>& chans) const {
    const auto n = static_cast<Eigen::Index>(g.nodes.size());
    ag::Matrix onehot = ag::Matrix::Zero(n, kNodeTypeCount);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<int>(g.nodes[static_cast<std::size_t>(i)].type)) = 1.0;
    const auto rel_onehot = static_cast<Eigen::Index>(relations_.size()) + 1;
    ag::Matrix rel_in = ag::Matrix::Zero(static_cast<Eigen::Index>(chans.size()), 2 * kNodeTypeCount + rel_onehot);
    for (std::size_t c = 0; c < chans.size(); ++c) {
      const auto r = static_cast<Eigen::Index>(c);
      rel_in.row(r).head(kNodeTypeCount) = onehot.row(chans[c].src);
      rel_in.row(r).segment(kNodeTypeCount, kNodeTypeCount) = onehot.row(chans[c].dst);
      rel_in(r, 2 * kNodeTypeCount + chans[c].relation) = 1.0;
    }
    return {node_type_.forward(ag::constant(std::move(onehot))), rel_type_.forward(ag::constant(std::move(rel_in)))};
  }

  TypeEmbeddings type_embeddings(const EvidenceGraph& g) const { return type_embeddings(g, channels(g)); }

  /// m_un for one sender state, sender type vector and relation vector.
  ag::Var message(const ag::Var& h_u, const ag::Var& v_u, const ag::Var& r_un, int layer) const {
    return layers_.at(static_cast<std::size_t>(layer)).message.forward(ag::concat_cols({h_u, v_u, r_un}));
  }

  /// Per-channel attention column (channels x 1), normalized per receiver.
  ag::Var attention_column(const ag::Var& h, const TypeEmbeddings& te, const ag::Var& lam,
                           const std::vector<MessageChannel>& chans, int layer) const {
    const auto n = h.rows();
    std::vector<int> src;
    std::vector<int> dst;
    for (const auto& c : chans) {
      src.push_back(c.src);
      dst.push_back(c.dst);
    }
    if (!cfg_.use_attention) {
      std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
      for (int d : dst) deg[static_cast<std::size_t>(d)] += 1.0;
      ag::Matrix w(static_cast<Eigen::Index>(chans.size()), 1);
      for (std::size_t c = 0; c < chans.size(); ++c) w(static_cast<Eigen::Index>(c), 0) = 1.0 / deg[static_cast<std::size_t>(dst[c])];
      return ag::constant(std::move(w));
    }
    const auto& L = layers_.at(static_cast<std::size_t>(layer));
    ag::Var q = L.query.forward(ag::concat_cols({h, te.node_type, lam}));
    ag::Var k = L.key.forward(ag::concat_cols({ag::gather_rows(h, dst), ag::gather_rows(te.node_type, dst),
                                               ag::gather_rows(lam, dst), te.relation}));
    ag::Var scores = ag::scale(ag::rowwise_dot(ag::gather_rows(q, src), k),
                               1.0 / std::sqrt(static_cast<double>(cfg_.hidden)));
    return ag::segment_softmax(scores, dst, static_cast<int>(n));
  }

  /// Lifted relevance block (n x relevance_dim); zero when relevance is off.
  ag::Var relevance_features(const ag::Var& relevance) const {
    if (!cfg_.use_relevance) return ag::constant(ag::Matrix::Zero(relevance.rows(), cfg_.relevance_dim));
    return relevance_.forward(relevance);
  }

  /// Attention weights of one layer for inspection, evaluated at states h.
  std::vector<AttentionWeight> attention(const ag::Var& h, const EvidenceGraph& g, const ag::Var& relevance,
                                         int layer) const {
    const auto chans = channels(g);
    const auto te = type_embeddings(g, chans);
    ag::Var alpha = attention_column(h, te, relevance_features(relevance), chans, layer);
    std::vector<AttentionWeight> out;
    for (std::size_t c = 0; c < chans.size(); ++c) {
      const auto& ch = chans[c];
      out.push_back({g.nodes[static_cast<std::size_t>(ch.src)].id, g.nodes[static_cast<std::size_t>(ch.dst)].id,
                     ch.relation == self_relation() ? std::string() : relations_[static_cast<std::size_t>(ch.relation)],
                     alpha.value()(static_cast<Eigen::Index>(c), 0)});
    }
    return out;
  }

  ag::Var layer_forward(const ag::Var& h, const TypeEmbeddings& te, const ag::Var& lam,
                        const std::vector<MessageChannel>& chans, int layer) {
    const auto n = h.rows();
    std::vector<int> src;
    std::vector<int> dst;
    for (const auto& c : chans) {
      src.push_back(c.src);
      dst.push_back(c.dst);
    }
    auto& L = layers_.at(static_cast<std::size_t>(layer));
    ag::Var m = message(ag::gather_rows(h, src), ag::gather_rows(te.node_type, src), te.relation, layer);
    ag::Var alpha = attention_column(h, te, lam, chans, layer);
    ag::Var agg = ag::scatter_add_rows(ag::mul_col(m, alpha), dst, n);
    ag::Var upd = L.norm.forward(L.update.forward(agg), training_);
    return ag::add(upd, h);
  }

  /// Runs all layers from the given initial states (n x D) and relevance
  /// column (n x 1).
  GraphEncoding encode(const EvidenceGraph& g, const ag::Var& initial, const ag::Var& relevance) {
    if (g.nodes.empty()) throw Error(ErrorCode::kEmptyGraph, "encode_graph: graph has no nodes");
    if (initial.rows() != static_cast<Eigen::Index>(g.nodes.size()) || initial.cols() != cfg_.hidden) {
      throw Error(ErrorCode::kDimensionMismatch, "encode_graph: initial states must be |V| x D");
    }
    const auto chans = channels(g);
    const auto te = type_embeddings(g, chans);
    const ag::Var lam = relevance_features(relevance);
    ag::Var h = initial;
    for (int l = 0; l < cfg_.layers; ++l) h = layer_forward(h, te, lam, chans, l);
    return {ag::mean_rows(h), h};
  }

  /// Encodes several graphs as one disjoint union, so batch statistics span
  /// all of their nodes. Returns one encoding per graph.
  std::vector<GraphEncoding> encode_batch(const std::vector<const EvidenceGraph*>& graphs,
                                          const std::vector<ag::Var>& initial,
                                          const std::vector<ag::Var>& relevance) {
    if (graphs.size() != initial.size() || graphs.size() != relevance.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "encode_batch: one initial/relevance block per graph");
    }
    if (graphs.size() == 1) return {encode(*graphs[0], initial[0], relevance[0])};
    EvidenceGraph joint;
    int offset = 0;
    for (const auto* g : graphs) {
      if (g->nodes.empty()) throw Error(ErrorCode::kEmptyGraph, "encode_batch: graph has no nodes");
      int max_id = 0;
      for (auto n : g->nodes) {
        max_id = std::max(max_id, n.id);
        n.id += offset;
        joint.nodes.push_back(std::move(n));
      }
      for (auto e : g->edges) {
        e.head += offset;
        e.tail += offset;
        joint.edges.push_back(std::move(e));
      }
      offset += max_id + 1;
    }
    GraphEncoding all = encode(joint, ag::concat_rows(initial), ag::concat_rows(relevance));
    std::vector<GraphEncoding> out;
    Eigen::Index row = 0;
    for (const auto* g : graphs) {
      const auto n = static_cast<Eigen::Index>(g->nodes.size());
      ag::Var states = ag::slice_rows(all.node_states, row, n);
      out.push_back({ag::mean_rows(states), states});
      row += n;
    }
    return out;
  }

  /// Uses node.embedding and node.relevance as constant inputs.
  GraphEncoding encode(const EvidenceGraph& g) {
    return encode(g, constant_embeddings(g), constant_relevance(g));
  }

  ag::Var constant_embeddings(const EvidenceGraph& g) const {
    ag::Matrix init(static_cast<Eigen::Index>(g.nodes.size()), cfg_.hidden);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (g.nodes[i].embedding.size() != cfg_.hidden) {
        throw Error(ErrorCode::kDimensionMismatch, "node " + g.nodes[i].surface + " has no D-dim embedding");
      }
      init.row(static_cast<Eigen::Index>(i)) = g.nodes[i].embedding.transpose();
    }
    return ag::constant(std::move(init));
  }

  static ag::Var constant_relevance(const EvidenceGraph& g) {
    ag::Matrix lam(static_cast<Eigen::Index>(g.nodes.size()), 1);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) lam(static_cast<Eigen::Index>(i), 0) = g.nodes[i].relevance;
    return ag::constant(std::move(lam));
  }

 private:
  GraphEncoderConfig cfg_;
  std::vector<std::string> relations_;
  nn::Linear node_type_;
  nn::Linear rel_type_;
  nn::Linear relevance_;
  std::vector<Layer> layers_;
  bool training_ = false;
};

}  // namespace gsap
