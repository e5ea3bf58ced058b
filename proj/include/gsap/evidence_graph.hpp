#pragma once

// Per-question evidence graph: topic entities, retrieved KG paths, paraphrase
// entities, relevance scoring, pruning and question-to-choice triplet
// selection.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/core/text.hpp"
#include "gsap/knowledge_store.hpp"

namespace gsap {

enum class NodeType : int { kQuestion = 0, kChoice = 1, kOther = 2, kParaphrase = 3 };
inline constexpr int kNodeTypeCount = 4;

inline std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::kQuestion: return "question";
    case NodeType::kChoice: return "choice";
    case NodeType::kOther: return "other";
    case NodeType::kParaphrase: return "paraphrase";
  }
  return "?";
}

inline bool is_topic(NodeType t) { return t == NodeType::kQuestion || t == NodeType::kChoice; }

struct EvidenceNode {
  int id = 0;
  std::string surface;
  NodeType type = NodeType::kOther;
  double relevance = 0.5;
  Eigen::VectorXd embedding;  // optional initial features
};

struct EvidenceEdge {
  int head = 0;
  int tail = 0;
  std::string relation;

  bool operator==(const EvidenceEdge&) const = default;
};

struct EvidenceGraph {
  std::vector<EvidenceNode> nodes;
  std::vector<EvidenceEdge> edges;
  std::string question_text;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }

  /// Row position of a node id in `nodes`, or -1.
  int index_of(int id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id == id) return static_cast<int>(i);
    }
    return -1;
  }

  const EvidenceNode& node(int id) const {
    const int i = index_of(id);
    if (i < 0) throw Error(ErrorCode::kInvalidArgument, "no node with id " + std::to_string(id));
    return nodes[static_cast<std::size_t>(i)];
  }

  int find_surface(std::string_view surface) const {
    for (const auto& n : nodes) {
      if (n.surface == surface) return n.id;
    }
    return -1;
  }

  std::unordered_map<int, int> id_to_index() const {
    std::unordered_map<int, int> m;
    for (std::size_t i = 0; i < nodes.size(); ++i) m.emplace(nodes[i].id, static_cast<int>(i));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Entity extraction

/// Greedy longest-match, non-overlapping lexicon spans over word tokens.
inline std::vector<std::string> match_entities(std::string_view text_in, const TripleStore& store) {
  const auto toks = text::words(text_in);
  std::vector<std::string> found;
  const std::size_t max_len = std::max<std::size_t>(1, store.max_entity_words());
  std::size_t i = 0;
  while (i < toks.size()) {
    std::size_t taken = 0;
    for (std::size_t len = std::min(max_len, toks.size() - i); len >= 1; --len) {
      std::string span = toks[i];
      for (std::size_t j = 1; j < len; ++j) span += " " + toks[i + j];
      if (store.contains_entity(span)) {
        if (std::find(found.begin(), found.end(), span) == found.end()) found.push_back(span);
        taken = len;
        break;
      }
    }
    i += taken ? taken : 1;
  }
  return found;
}

struct ChoiceEntity {
  std::string surface;
  int choice_index = 0;

  bool operator==(const ChoiceEntity&) const = default;
};

struct TopicEntities {
  std::vector<std::string> question;
  std::vector<ChoiceEntity> choices;

  /// Entities of one choice only.
  std::vector<std::string> for_choice(int index) const {
    std::vector<std::string> out;
    for (const auto& c : choices) {
      if (c.choice_index == index) out.push_back(c.surface);
    }
    return out;
  }
};

inline TopicEntities extract_topic_entities(std::string_view question, const std::vector<std::string>& choices,
                                            const TripleStore& store) {
  if (choices.empty()) throw Error(ErrorCode::kInvalidArgument, "extract_topic_entities: no choices");
  TopicEntities out;
  out.question = match_entities(question, store);
  if (out.question.empty()) {
    throw Error(ErrorCode::kQuestionUngrounded, "no lexicon entity in question: " + std::string(question));
  }
  for (std::size_t c = 0; c < choices.size(); ++c) {
    for (auto& e : match_entities(choices[c], store)) out.choices.push_back({std::move(e), static_cast<int>(c)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction

struct GraphBuildConfig {
  std::size_t max_hops = 2;
  std::size_t max_paths = 100;
  bool use_kg_paths = true;
  bool use_paraphrase_nodes = true;
};

namespace detail {

class GraphBuilder {
 public:
  explicit GraphBuilder(EvidenceGraph& g) : g_(g) {}

  int node(const std::string& surface, NodeType type) {
    auto it = by_surface_.find(surface);
    if (it != by_surface_.end()) return it->second;
    const int id = static_cast<int>(g_.nodes.size());
    g_.nodes.push_back({id, surface, type, 0.5, {}});
    by_surface_.emplace(surface, id);
    return id;
  }

  void edge(int head, int tail, const std::string& relation) {
    if (head == tail) return;
    if (!edges_.insert({head, tail, relation}).second) return;
    g_.edges.push_back({head, tail, relation});
  }

 private:
  EvidenceGraph& g_;
  std::unordered_map<std::string, int> by_surface_;
  std::set<std::tuple<int, int, std::string>> edges_;
};

}  // namespace detail

/// Merges retrieved paths, question-choice links and paraphrase entities
/// into one graph. Nodes are merged by surface form; the first type wins.
inline EvidenceGraph build_graph(const std::vector<std::string>& question_entities,
                                 const std::vector<std::string>& choice_entities, const TripleStore& store,
                                 const ParaphraseDict& para, const GraphBuildConfig& cfg = {},
                                 std::string question_text = {}) {
  if (question_entities.empty()) {
    throw Error(ErrorCode::kQuestionUngrounded, "build_graph: no question entities");
  }
  EvidenceGraph g;
  g.question_text = std::move(question_text);
  detail::GraphBuilder b(g);

  std::vector<std::string> topics;
  for (const auto& q : question_entities) {
    b.node(text::normalize_entity(q), NodeType::kQuestion);
    topics.push_back(text::normalize_entity(q));
  }
  for (const auto& c : choice_entities) {
    b.node(text::normalize_entity(c), NodeType::kChoice);
    topics.push_back(text::normalize_entity(c));
  }

  if (cfg.use_kg_paths) {
    for (const auto& path : store.query_paths(topics, cfg.max_hops, cfg.max_paths)) {
      for (const auto& step : path) {
        const Triple& t = store.triples()[step.triple_id];
        const int h = b.node(t.head, NodeType::kOther);
        const int tl = b.node(t.tail, NodeType::kOther);
        b.edge(h, tl, t.relation);
      }
    }
  }

  for (const auto& q : question_entities) {
    for (const auto& c : choice_entities) {
      b.edge(b.node(text::normalize_entity(q), NodeType::kQuestion),
             b.node(text::normalize_entity(c), NodeType::kChoice), std::string(kRelatedQA));
    }
  }

  if (cfg.use_paraphrase_nodes) {
    for (const auto& topic : topics) {
      auto def = para.lookup(topic);
      if (!def) continue;
      const int t = b.node(topic, NodeType::kQuestion);
      for (const auto& e : match_entities(*def, store)) {
        if (e == topic) continue;
        b.edge(t, b.node(e, NodeType::kParaphrase), std::string(kDefTop));
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Relevance and pruning

using TextEmbedder = std::function<ag::RowVector(std::string_view)>;

/// Scalar relevance head: sigmoid of an affine map of [phi(node); phi(question)].
class RelevanceScorer {
 public:
  RelevanceScorer() = default;
  RelevanceScorer(nn::ParamStore& store, const std::string& name, Eigen::Index text_dim, nn::ParamGroup group)
      : affine_(store, name, 2 * text_dim, 1, group) {}

  /// Differentiable (n x 1) relevance column; also writes node.relevance.
  ag::Var score(EvidenceGraph& g, const TextEmbedder& phi) const {
    const ag::RowVector q = phi(g.question_text);
    ag::Matrix features(static_cast<Eigen::Index>(g.nodes.size()), 2 * q.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      features.row(r).head(q.size()) = phi(g.nodes[i].surface);
      features.row(r).tail(q.size()) = q;
    }
    ag::Var lambda = ag::sigmoid(affine_.forward(ag::constant(std::move(features))));
    for (std::size_t i = 0; i < g.nodes.size(); ++i) g.nodes[i].relevance = lambda.value()(static_cast<Eigen::Index>(i), 0);
    return lambda;
  }

  const nn::Linear& affine() const { return affine_; }

 private:
  nn::Linear affine_;
};

inline void score_relevance(EvidenceGraph& g, const TextEmbedder& phi, const RelevanceScorer& scorer) {
  (void)scorer.score(g, phi);
}

/// Drops non-topic nodes whose relevance is below the threshold, together
/// with their incident edges. Topic entities are never removed.
inline EvidenceGraph prune(const EvidenceGraph& g, double threshold) {
  if (threshold < 0.0 || threshold >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "prune: threshold must be in [0, 1)");
  }
  EvidenceGraph out;
  out.question_text = g.question_text;
  std::set<int> kept;
  for (const auto& n : g.nodes) {
    if (is_topic(n.type) || n.relevance >= threshold) {
      out.nodes.push_back(n);
      kept.insert(n.id);
    }
  }
  for (const auto& e : g.edges) {
    if (kept.count(e.head) && kept.count(e.tail)) out.edges.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Question-to-choice triplets

struct QCTriplet {
  int head = 0;
  std::string relation;
  int tail = 0;

  bool operator==(const QCTriplet&) const = default;
};

namespace detail {

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj, int src) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(src)] = 0;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

}  // namespace detail

/// Every edge on a shortest (<= 2 hop) question-to-choice path, ignoring the
/// synthetic RelatedQA links when measuring distance, plus every RelatedQA
/// edge. Ordered by descending min endpoint relevance, then by surfaces.
inline std::vector<QCTriplet> select_qc_triplets(const EvidenceGraph& g) {
  const auto index = g.id_to_index();
  const std::size_t n = g.nodes.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : g.edges) {
    if (e.relation == kRelatedQA) continue;
    adj[static_cast<std::size_t>(index.at(e.head))].push_back(index.at(e.tail));
    adj[static_cast<std::size_t>(index.at(e.tail))].push_back(index.at(e.head));
  }
  std::vector<int> qs;
  std::vector<int> cs;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.nodes[i].type == NodeType::kQuestion) qs.push_back(static_cast<int>(i));
    if (g.nodes[i].type == NodeType::kChoice) cs.push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> dist_c;
  for (int c : cs) dist_c.push_back(detail::bfs_distances(adj, c));

  std::vector<bool> chosen(g.edges.size(), false);
  for (int q : qs) {
    const auto dq = detail::bfs_distances(adj, q);
    for (std::size_t ci = 0; ci < cs.size(); ++ci) {
      const int d = dq[static_cast<std::size_t>(cs[ci])];
      if (d < 1 || d > 2) continue;
      const auto& dc = dist_c[ci];
      for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const auto& e = g.edges[ei];
        if (e.relation == kRelatedQA) continue;
        const auto u = static_cast<std::size_t>(index.at(e.head));
        const auto v = static_cast<std::size_t>(index.at(e.tail));
        const bool fwd = dq[u] >= 0 && dc[v] >= 0 && dq[u] + 1 + dc[v] == d;
        const bool bwd = dq[v] >= 0 && dc[u] >= 0 && dq[v] + 1 + dc[u] == d;
        if (fwd || bwd) chosen[ei] = true;
      }
    }
  }
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    if (g.edges[ei].relation == kRelatedQA) chosen[ei] = true;
  }

  struct Keyed {
    double min_rel;
    std::string head, relation, tail;
    QCTriplet t;
  };
  std::vector<Keyed> keyed;
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    if (!chosen[ei]) continue;
    const auto& e = g.edges[ei];
    const auto& h = g.nodes[static_cast<std::size_t>(index.at(e.head))];
    const auto& t = g.nodes[static_cast<std::size_t>(index.at(e.tail))];
    keyed.push_back({std::min(h.relevance, t.relevance), h.surface, e.relation, t.surface, {e.head, e.relation, e.tail}});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.min_rel != b.min_rel) return a.min_rel > b.min_rel;
    return std::tie(a.head, a.relation, a.tail) < std::tie(b.head, b.relation, b.tail);
  });
  std::vector<QCTriplet> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::move(k.t));
  return out;
}

// ---------------------------------------------------------------------------
// JSON dump

inline nlohmann::json graph_to_json(const EvidenceGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id}, {"surface", n.surface}, {"type", to_string(n.type)}, {"relevance", n.relevance}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({{"head", e.head}, {"tail", e.tail}, {"relation", e.relation}});
  return {{"nodes", nodes}, {"edges", edges}};
}

}  // namespace gsap
