#pragma once

// Self-checks shared by `gsap verify` and the acceptance binary. Each returns
// a Check with the measured quantity and the bound it was held to.

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/gradcheck.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/oracle.hpp"
#include "gsap/structure_prompt.hpp"
#include "gsap/trainer.hpp"
#include "gsap/transformer.hpp"

namespace gsap::verify {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;  // measured error / count
  double bound = 0.0;
  std::string detail;
};

inline const std::vector<std::string>& test_relations() {
  static const std::vector<std::string> r{"DefTop", "RelatedQA", "is_a", "part_of", "used_for"};
  return r;
}

/// Graph encoder vs the dense oracle on random graphs, eval-mode BN.
inline Check oracle_equivalence(int graphs = 100, int max_nodes = 10, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(1, max_nodes);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < graphs; ++s) {
    nn::ParamStore store(rng());
    GraphEncoderConfig cfg{.hidden = 8, .layers = 1 + s % 3, .node_type_dim = 4, .rel_type_dim = 4, .relevance_dim = 3};
    cfg.use_attention = s % 7 != 3;
    cfg.use_relevance = s % 5 != 2;
    GraphEncoder enc(store, "gnn", cfg, test_relations());
    detail::perturb_batch_norm(store, rng);
    enc.set_training(false);
    const EvidenceGraph g = oracle::random_graph(rng, size(rng), test_relations(), 0.35);
    const auto n = static_cast<Eigen::Index>(g.nodes.size());
    ag::Matrix init(n, cfg.hidden);
    for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] = normal(rng);
    const auto got = enc.encode(g, ag::constant(init), GraphEncoder::constant_relevance(g));
    Eigen::VectorXd lam(n);
    for (Eigen::Index i = 0; i < n; ++i) lam(i) = g.nodes[static_cast<std::size_t>(i)].relevance;
    const auto want = oracle::oracle_dense_gnn(
        g, store, "gnn", test_relations(),
        {.layers = cfg.layers, .use_attention = cfg.use_attention, .use_relevance = cfg.use_relevance}, init, lam);
    worst = std::max(worst, (got.node_states.value() - want.node_states).cwiseAbs().maxCoeff());
    worst = std::max(worst, (got.graph_vector.value().transpose() - want.graph_vector).cwiseAbs().maxCoeff());
  }
  return {"oracle_dense_gnn equivalence (" + std::to_string(graphs) + " graphs)", worst < 1e-6, worst, 1e-6, "max abs diff"};
}

/// Per-receiver attention mass over (graph, layer) samples.
inline Check attention_normalization(int samples = 1000, std::uint64_t seed = 13) {
  std::mt19937_64 rng(seed);
  nn::ParamStore store(seed);
  GraphEncoderConfig cfg{.hidden = 8, .layers = 3, .node_type_dim = 4, .rel_type_dim = 4, .relevance_dim = 3};
  GraphEncoder enc(store, "gnn", cfg, test_relations());
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> layer(0, cfg.layers - 1);
  std::normal_distribution<double> normal(0.0, 3.0);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const EvidenceGraph g = oracle::random_graph(rng, size(rng), test_relations(), 0.4);
    ag::Matrix h(static_cast<Eigen::Index>(g.nodes.size()), cfg.hidden);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = normal(rng);
    std::map<int, double> mass;
    for (const auto& w : enc.attention(ag::constant(h), g, GraphEncoder::constant_relevance(g), layer(rng))) {
      mass[w.dst_id] += w.weight;
    }
    for (const auto& n : g.nodes) worst = std::max(worst, std::abs(mass[n.id] - 1.0));
  }
  return {"attention rows sum to 1 (" + std::to_string(samples) + " samples)", worst < 1e-6, worst, 1e-6,
          "max |sum - 1|"};
}

inline Check gradient(const std::string& component, double bound = 1e-4, double eps = 1e-5) {
  const auto r = grad_check_component(component, eps);
  return {"grad_check " + component, r.max_rel_error < bound, r.max_rel_error, bound,
          std::to_string(r.checked) + " entries, worst " + r.worst};
}

/// prune() against a direct set filter, plus idempotence.
inline Check pruning(int graphs = 200, std::uint64_t seed = 17) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(1, 15);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int failures = 0;
  for (int s = 0; s < graphs; ++s) {
    const EvidenceGraph g = oracle::random_graph(rng, size(rng), test_relations(), 0.3);
    const double theta = s % 2 == 0 ? 0.1 : unit(rng) * 0.999;
    std::set<int> want_nodes;
    for (const auto& n : g.nodes) {
      const bool topic = n.type == NodeType::kQuestion || n.type == NodeType::kChoice;
      if (topic || !(n.relevance < theta)) want_nodes.insert(n.id);
    }
    std::set<std::tuple<int, int, std::string>> want_edges;
    for (const auto& e : g.edges) {
      if (want_nodes.count(e.head) && want_nodes.count(e.tail)) want_edges.insert({e.head, e.tail, e.relation});
    }
    const EvidenceGraph got = prune(g, theta);
    std::set<int> got_nodes;
    for (const auto& n : got.nodes) got_nodes.insert(n.id);
    std::set<std::tuple<int, int, std::string>> got_edges;
    for (const auto& e : got.edges) got_edges.insert({e.head, e.tail, e.relation});
    const EvidenceGraph twice = prune(got, theta);
    const bool idem = twice.nodes.size() == got.nodes.size() && twice.edges == got.edges;
    if (got_nodes != want_nodes || got_edges != want_edges || !idem) ++failures;
  }
  return {"prune == filter oracle, idempotent (" + std::to_string(graphs) + " graphs)", failures == 0,
          static_cast<double>(failures), 0.0, "mismatching graphs"};
}

inline std::vector<Check> loss_analytics() {
  std::vector<Check> out;
  const double uniform = loss(ag::RowVector::Constant(5, 0.37), 2);
  out.push_back({"uniform 5-way loss = ln 5", std::abs(uniform - std::log(5.0)) < 1e-9, std::abs(uniform - std::log(5.0)),
                 1e-9, ""});
  ag::RowVector sharp(4);
  sharp << -30.0, 30.0, -25.0, -40.0;
  const double perfect = loss(sharp, 1);
  out.push_back({"perfect prediction loss", perfect < 1e-6, perfect, 1e-6, ""});
  std::mt19937_64 rng(19);
  std::normal_distribution<double> normal(0.0, 2.0);
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) {
    ag::RowVector z(2 + s % 4);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    const double shift = normal(rng) * 50.0;
    const int gold = s % static_cast<int>(z.size());
    worst = std::max(worst, std::abs(loss(z, gold) - loss((z.array() + shift).matrix(), gold)));
  }
  out.push_back({"loss shift invariance", worst < 1e-9, worst, 1e-9, "200 random shifts"});
  return out;
}

/// With no prompting layers the prompted encoder must reproduce the plain
/// forward bit for bit.
inline Check zero_prompt_identity(int trials = 20, std::uint64_t seed = 23) {
  std::mt19937_64 rng(seed);
  nn::ParamStore store(seed);
  TransformerConfig tcfg{.hidden = 16, .layers = 3, .heads = 4, .ffn = 32, .max_len = 64};
  FrozenEncoder enc(store, "enc", tcfg, 50);
  PromptConfig pcfg{.length = 4, .layers = 0};
  PromptGenerator gen(store, "prompt", pcfg, tcfg.layers, tcfg.hidden, 8, 3);
  std::uniform_int_distribution<int> tok(4, 49);
  std::uniform_int_distribution<int> len(1, 40);
  int mismatches = 0;
  for (int t = 0; t < trials; ++t) {
    AssembledText text;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      text.ids.push_back(tok(rng));
      text.segments.push_back(Segment::kQuestion);
    }
    EvidenceGraph g;
    g.nodes.push_back({0, "a", NodeType::kQuestion, 0.5, {}});
    g.nodes.push_back({1, "b", NodeType::kChoice, 0.5, {}});
    g.edges.push_back({0, 1, "RelatedQA"});
    const auto set = gen.generate(select_qc_triplets(g), g, ag::constant(ag::Matrix::Zero(2, 8)), {1},
                                  ag::constant(ag::Matrix::Zero(1, 8)));
    const ag::Matrix a = encode(enc, text, set).final_states.value();
    const ag::Matrix b = enc.forward(text.ids).value();
    if (a.rows() != b.rows() || a.cols() != b.cols() ||
        std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
      ++mismatches;
    }
  }
  return {"p = 0 encoder output bit-identical to plain forward", mismatches == 0, static_cast<double>(mismatches),
          0.0, std::to_string(trials) + " random sequences"};
}

inline std::vector<Check> run_all() {
  std::vector<Check> out;
  out.push_back(oracle_equivalence());
  out.push_back(attention_normalization());
  for (const char* c : {"linear", "graph-encoder", "prompt", "hmpr"}) {
    out.push_back(gradient(c, std::string_view(c) == "linear" ? 1e-7 : 1e-4));
  }
  out.push_back(pruning());
  for (auto& c : loss_analytics()) out.push_back(std::move(c));
  out.push_back(zero_prompt_identity());
  return out;
}

}  // namespace gsap::verify
