#pragma once

// Dense reference implementation of the graph encoder, written against raw
// weight matrices looked up by name. It shares no code with GraphEncoder:
// attention is computed over a full |V| x |V| x |R| score tensor with a
// multiplicity mask instead of per-channel segment softmax.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/evidence_graph.hpp"

namespace gsap::oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DenseGnnResult {
  Mat node_states;  // n x D, rows follow g.nodes
  Vec graph_vector;
};

struct DenseGnnConfig {
  int layers = 0;
  bool use_attention = true;
  bool use_relevance = true;
  double bn_eps = 1e-5;
};

namespace detail {

inline const Mat& weight(const nn::ParamStore& store, const std::string& name) {
  const auto* p = store.find(name);
  if (!p) throw Error(ErrorCode::kInvalidArgument, "oracle: missing parameter " + name);
  return p->var.value();
}

/// y = W^T x + b for a column x, with W stored (in x out).
inline Vec affine(const nn::ParamStore& store, const std::string& name, const Vec& x) {
  Vec y = weight(store, name + ".weight").transpose() * x;
  if (store.find(name + ".bias")) y += weight(store, name + ".bias").transpose();
  return y;
}

inline Vec cat(std::initializer_list<Vec> parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  Vec out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

}  // namespace detail

/// Eval-mode (running-statistics) forward of the encoder named `prefix`.
inline DenseGnnResult oracle_dense_gnn(const EvidenceGraph& g, const nn::ParamStore& store, const std::string& prefix,
                                       const std::vector<std::string>& relations, const DenseGnnConfig& cfg,
                                       const Mat& initial, const Vec& relevance) {
  using detail::affine;
  using detail::cat;
  const int n = static_cast<int>(g.nodes.size());
  if (n == 0) throw Error(ErrorCode::kEmptyGraph, "oracle: empty graph");
  const int nrel = static_cast<int>(relations.size()) + 1;  // last = self
  const int self = nrel - 1;

  auto row_of = [&](int id) {
    for (int i = 0; i < n; ++i) {
      if (g.nodes[static_cast<std::size_t>(i)].id == id) return i;
    }
    throw Error(ErrorCode::kInvalidArgument, "oracle: dangling edge");
  };
  auto rel_of = [&](const std::string& r) {
    for (int i = 0; i < self; ++i) {
      if (relations[static_cast<std::size_t>(i)] == r) return i;
    }
    throw Error(ErrorCode::kUnknownRelation, "oracle: unknown relation " + r);
  };

  // count[u][v][r]: how many directed channels u -> v carry relation r.
  std::vector<int> count(static_cast<std::size_t>(n * n * nrel), 0);
  auto at = [&](int u, int v, int r) -> int& { return count[static_cast<std::size_t>((u * n + v) * nrel + r)]; };
  for (const auto& e : g.edges) {
    const int h = row_of(e.head);
    const int t = row_of(e.tail);
    const int r = rel_of(e.relation);
    ++at(h, t, r);
    ++at(t, h, r);
  }
  for (int i = 0; i < n; ++i) ++at(i, i, self);

  auto type_onehot = [&](int i) {
    Vec v = Vec::Zero(kNodeTypeCount);
    v(static_cast<int>(g.nodes[static_cast<std::size_t>(i)].type)) = 1.0;
    return v;
  };
  std::vector<Vec> node_type(static_cast<std::size_t>(n));
  std::vector<Vec> lam(static_cast<std::size_t>(n));
  const Eigen::Index ldim = detail::weight(store, prefix + ".f_lambda.weight").cols();
  for (int i = 0; i < n; ++i) {
    node_type[static_cast<std::size_t>(i)] = affine(store, prefix + ".f_v", type_onehot(i));
    lam[static_cast<std::size_t>(i)] =
        cfg.use_relevance ? affine(store, prefix + ".f_lambda", Vec::Constant(1, relevance(i))) : Vec(Vec::Zero(ldim));
  }
  auto rel_vec = [&](int u, int v, int r) {
    Vec onehot = Vec::Zero(nrel);
    onehot(r) = 1.0;
    return affine(store, prefix + ".f_r", cat({type_onehot(u), type_onehot(v), onehot}));
  };

  Mat h = initial;
  const double dim = static_cast<double>(h.cols());
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Mat agg = Mat::Zero(n, h.cols());
    for (int v = 0; v < n; ++v) {
      // Dense pass over every (sender, relation) pair; masked entries drop out.
      Mat scores = Mat::Constant(n, nrel, -std::numeric_limits<double>::infinity());
      double total_count = 0.0;
      for (int u = 0; u < n; ++u) {
        for (int r = 0; r < nrel; ++r) {
          if (at(u, v, r) == 0) continue;
          total_count += at(u, v, r);
          if (!cfg.use_attention) {
            scores(u, r) = 0.0;
            continue;
          }
          const Vec hu = h.row(u).transpose();
          const Vec hv = h.row(v).transpose();
          const Vec q = affine(store, p + ".f_q", cat({hu, node_type[static_cast<std::size_t>(u)],
                                                       lam[static_cast<std::size_t>(u)]}));
          const Vec k = affine(store, p + ".f_k", cat({hv, node_type[static_cast<std::size_t>(v)],
                                                       lam[static_cast<std::size_t>(v)], rel_vec(u, v, r)}));
          scores(u, r) = q.dot(k) / std::sqrt(dim);
        }
      }
      const double mx = scores.maxCoeff();
      double z = 0.0;
      for (int u = 0; u < n; ++u) {
        for (int r = 0; r < nrel; ++r) {
          if (at(u, v, r) > 0) z += at(u, v, r) * std::exp(scores(u, r) - mx);
        }
      }
      for (int u = 0; u < n; ++u) {
        for (int r = 0; r < nrel; ++r) {
          if (at(u, v, r) == 0) continue;
          const double alpha = at(u, v, r) * std::exp(scores(u, r) - mx) / z;
          const Vec m = affine(store, p + ".f_msg", cat({Vec(h.row(u).transpose()),
                                                         node_type[static_cast<std::size_t>(u)], rel_vec(u, v, r)}));
          agg.row(v) += alpha * m.transpose();
        }
      }
      (void)total_count;
    }
    Mat upd(n, h.cols());
    for (int v = 0; v < n; ++v) upd.row(v) = affine(store, p + ".f_n", Vec(agg.row(v).transpose())).transpose();
    const auto& mean = detail::weight(store, p + ".bn.running_mean");
    const auto& var = detail::weight(store, p + ".bn.running_var");
    const auto& gamma = detail::weight(store, p + ".bn.gamma");
    const auto& beta = detail::weight(store, p + ".bn.beta");
    for (int v = 0; v < n; ++v) {
      for (Eigen::Index c = 0; c < h.cols(); ++c) {
        const double xhat = (upd(v, c) - mean(0, c)) / std::sqrt(var(0, c) + cfg.bn_eps);
        h(v, c) += gamma(0, c) * xhat + beta(0, c);
      }
    }
  }
  return {h, h.colwise().mean().transpose()};
}

/// Random connected-or-not evidence graph with ids 0..n-1, random node types
/// (at least one question and one choice node) and relations from `relations`.
inline EvidenceGraph random_graph(std::mt19937_64& rng, int n, const std::vector<std::string>& relations,
                                  double edge_prob = 0.3) {
  EvidenceGraph g;
  std::uniform_int_distribution<int> type(0, kNodeTypeCount - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> rel(0, relations.size() - 1);
  for (int i = 0; i < n; ++i) {
    EvidenceNode node;
    node.id = i;
    node.surface = "n" + std::to_string(i);
    node.type = i == 0 ? NodeType::kQuestion : (i == 1 ? NodeType::kChoice : static_cast<NodeType>(type(rng)));
    node.relevance = unit(rng);
    g.nodes.push_back(node);
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (unit(rng) < edge_prob) {
        if (unit(rng) < 0.5) {
          g.edges.push_back({a, b, relations[rel(rng)]});
        } else {
          g.edges.push_back({b, a, relations[rel(rng)]});
        }
      }
    }
  }
  return g;
}

}  // namespace gsap::oracle
