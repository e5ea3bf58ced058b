#pragma once

// Central finite-difference gradient checks for the trainable components.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/hmpr.hpp"
#include "gsap/oracle.hpp"
#include "gsap/structure_prompt.hpp"
#include "gsap/transformer.hpp"

namespace gsap {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every element of
/// every listed parameter. `loss` must rebuild the graph on each call.
inline GradCheckResult grad_check(const std::function<ag::Var()>& loss, const std::vector<nn::Parameter*>& params,
                                  double eps = 1e-5) {
  for (auto* p : params) p->var.zero_grad();
  ag::backward(loss());
  GradCheckResult r;
  for (auto* p : params) {
    const ag::Matrix analytic = p->var.has_grad() ? p->var.grad() : ag::Matrix::Zero(p->var.rows(), p->var.cols());
    ag::Matrix& w = p->var.mutable_value();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + eps;
      const double up = loss().item();
      w.data()[i] = orig - eps;
      const double down = loss().item();
      w.data()[i] = orig;
      const double err = relative_error(analytic.data()[i], (up - down) / (2.0 * eps));
      ++r.checked;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
    p->var.zero_grad();
  }
  return r;
}

inline std::vector<nn::Parameter*> trainable_params(nn::ParamStore& store, std::string_view prefix = {}) {
  std::vector<nn::Parameter*> out;
  for (auto& p : store.all()) {
    if (p.trainable() && p.name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

namespace detail {

inline ag::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Puts non-trivial values into BN buffers and affine terms so eval-mode
/// normalization is not the identity.
inline void perturb_batch_norm(nn::ParamStore& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& p : store.all()) {
    if (p.name.ends_with(".running_var")) {
      for (Eigen::Index i = 0; i < p.var.value().size(); ++i) p.var.mutable_value().data()[i] = u(rng);
    } else if (p.name.ends_with(".running_mean") || p.name.ends_with(".beta")) {
      p.var.mutable_value() = random_matrix(rng, p.var.rows(), p.var.cols(), 0.1);
    }
  }
}

}  // namespace detail

/// Named component checks at tiny dimensions: "linear", "graph-encoder",
/// "prompt" and "hmpr".
inline GradCheckResult grad_check_component(std::string_view component, double eps = 1e-5, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  nn::ParamStore store(seed);
  const std::vector<std::string> rels{"DefTop", "RelatedQA", "is_a", "part_of"};

  if (component == "linear") {
    nn::Linear lin(store, "lin", 5, 3, nn::ParamGroup::kGraph);
    const ag::Var x = ag::constant(detail::random_matrix(rng, 4, 5));
    const ag::Var c = ag::constant(detail::random_matrix(rng, 4, 3));
    return grad_check([&] { return ag::sum(ag::mul(lin.forward(x), c)); }, trainable_params(store), eps);
  }

  GraphEncoderConfig gcfg{.hidden = 6, .layers = 2, .node_type_dim = 3, .rel_type_dim = 3, .relevance_dim = 2};
  if (component == "graph-encoder") {
    GraphEncoder enc(store, "gnn", gcfg, rels);
    detail::perturb_batch_norm(store, rng);
    const EvidenceGraph g = oracle::random_graph(rng, 6, rels, 0.4);
    const ag::Var init = ag::constant(detail::random_matrix(rng, 6, gcfg.hidden));
    const ag::Var lam = GraphEncoder::constant_relevance(g);
    const ag::Var c = ag::constant(detail::random_matrix(rng, 1, gcfg.hidden));
    return grad_check([&] { return ag::sum(ag::mul(enc.encode(g, init, lam).graph_vector, c)); },
                      trainable_params(store), eps);
  }

  if (component == "prompt") {
    TransformerConfig tcfg{.hidden = 16, .layers = 2, .heads = 2, .ffn = 24, .max_len = 32};
    FrozenEncoder enc(store, "enc", tcfg, 20);
    PromptConfig pcfg{.length = 4, .layers = -1, .mlp_hidden = 5};
    PromptGenerator gen(store, "prompt", pcfg, tcfg.layers, tcfg.hidden, gcfg.hidden, rels.size());
    EvidenceGraph g = oracle::random_graph(rng, 4, rels, 0.0);
    g.edges = {{0, 2, "is_a"}, {2, 1, "part_of"}, {0, 1, "RelatedQA"}};
    const auto triplets = select_qc_triplets(g);
    std::vector<int> rel_ids;
    for (const auto& t : triplets) {
      for (std::size_t i = 0; i < rels.size(); ++i) {
        if (rels[i] == t.relation) rel_ids.push_back(static_cast<int>(i));
      }
    }
    const ag::Var states = ag::constant(detail::random_matrix(rng, 4, gcfg.hidden));
    const ag::Var gvec = ag::constant(detail::random_matrix(rng, 1, gcfg.hidden));
    AssembledText text;
    text.ids = {2, 5, 6, 7, 3, 8, 9, 3};
    text.segments = {Segment::kSpecial, Segment::kQuestion, Segment::kQuestion, Segment::kQuestion,
                     Segment::kSpecial, Segment::kChoice,   Segment::kChoice,   Segment::kSpecial};
    const ag::Var c = ag::constant(detail::random_matrix(rng, static_cast<Eigen::Index>(text.ids.size()) + 4, tcfg.hidden));
    return grad_check(
        [&] {
          auto set = gen.generate(triplets, g, states, rel_ids, gvec);
          return ag::sum(ag::mul(encode(enc, text, set).final_states, c));
        },
        trainable_params(store, "prompt."), eps);
  }

  if (component == "hmpr") {
    GraphEncoder gnn(store, "gnn", gcfg, rels);
    detail::perturb_batch_norm(store, rng);
    Hmpr head(store, "hmpr", HmprConfig{.fusion_dim = 4}, 5, gcfg.hidden);
    EvidenceGraph g = oracle::random_graph(rng, 5, rels, 0.3);
    g.edges.push_back({0, 1, "RelatedQA"});
    const std::vector<QCTriplet> triplets{{0, "RelatedQA", 1}};
    std::map<int, TripletOutput> outs;
    outs[0] = {ag::constant(detail::random_matrix(rng, 1, 5)), std::nullopt,
               ag::constant(detail::random_matrix(rng, 1, 5))};
    const ag::Var init = ag::constant(detail::random_matrix(rng, 5, gcfg.hidden));
    const ag::Var lam = GraphEncoder::constant_relevance(g);
    SegmentEmbeddings seg{ag::constant(detail::random_matrix(rng, 1, 5)), ag::constant(detail::random_matrix(rng, 1, 5)),
                          ag::constant(detail::random_matrix(rng, 1, 5))};
    return grad_check(
        [&] {
          ag::Var gp = head.refresh_graph(gnn, g, triplets, outs, init, lam);
          auto gates = head.knowledge_attention(head.fuse(seg, Hmpr::textual_summary(seg), gp));
          return head.logit(gates.fused);
        },
        trainable_params(store, "hmpr."), eps);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown grad-check component: " + std::string(component));
}

}  // namespace gsap
