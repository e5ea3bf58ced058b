#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "gsap/gradcheck.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/oracle.hpp"
#include "gsap/verify.hpp"

using namespace gsap;
using ag::Matrix;

namespace {

const std::vector<std::string> kRels{"DefTop", "RelatedQA", "is_a", "part_of"};

GraphEncoderConfig small_cfg(int layers = 2) {
  return {.hidden = 6, .layers = layers, .node_type_dim = 3, .rel_type_dim = 4, .relevance_dim = 2};
}

Matrix randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

const Matrix& W(const nn::ParamStore& s, const std::string& name) { return s.find(name)->var.value(); }

Matrix affine(const nn::ParamStore& s, const std::string& name, const Matrix& x) {
  Matrix y = x * W(s, name + ".weight");
  y.rowwise() += W(s, name + ".bias").row(0);
  return y;
}

EvidenceGraph two_node_graph() {
  EvidenceGraph g;
  g.nodes = {{0, "q", NodeType::kQuestion, 0.7, {}}, {1, "c", NodeType::kChoice, 0.4, {}}};
  g.edges = {{0, 1, "is_a"}};
  return g;
}

}  // namespace

TEST(GraphEncoder, TypeEmbeddingsAreDirectAffineMaps) {
  nn::ParamStore store(1);
  GraphEncoder enc(store, "gnn", small_cfg(), kRels);
  const auto g = two_node_graph();
  const auto te = enc.type_embeddings(g);
  Matrix onehot = Matrix::Zero(2, 4);
  onehot(0, 0) = 1;
  onehot(1, 1) = 1;
  EXPECT_TRUE(te.node_type.value().isApprox(affine(store, "gnn.f_v", onehot), 1e-14));
  // channels: 0->1, 1->0, self 0, self 1; relation one-hot has a trailing self slot
  ASSERT_EQ(te.relation.rows(), 4);
  Matrix rel_in = Matrix::Zero(4, 8 + 5);
  rel_in(0, 0) = 1, rel_in(0, 4 + 1) = 1, rel_in(0, 8 + 2) = 1;
  rel_in(1, 1) = 1, rel_in(1, 4 + 0) = 1, rel_in(1, 8 + 2) = 1;
  rel_in(2, 0) = 1, rel_in(2, 4 + 0) = 1, rel_in(2, 8 + 4) = 1;
  rel_in(3, 1) = 1, rel_in(3, 4 + 1) = 1, rel_in(3, 8 + 4) = 1;
  EXPECT_TRUE(te.relation.value().isApprox(affine(store, "gnn.f_r", rel_in), 1e-14));
  EXPECT_GT((te.relation.value().row(0) - te.relation.value().row(1)).norm(), 1e-6);  // orientation matters
}

TEST(GraphEncoder, IdentityAndZeroTypeMaps) {
  nn::ParamStore store(2);
  GraphEncoderConfig cfg = small_cfg();
  cfg.node_type_dim = 4;
  GraphEncoder enc(store, "gnn", cfg, kRels);
  store.find("gnn.f_v.weight")->var.mutable_value() = Matrix::Identity(4, 4);
  const auto g = two_node_graph();
  EXPECT_EQ(enc.type_embeddings(g).node_type.value().row(1), (Eigen::RowVector4d() << 0, 1, 0, 0).finished());
  store.find("gnn.f_r.weight")->var.mutable_value().setZero();
  store.find("gnn.f_r.bias")->var.mutable_value().setConstant(0.25);
  EXPECT_TRUE((enc.type_embeddings(g).relation.value().array() == 0.25).all());
}

TEST(GraphEncoder, MessageMatchesExplicitMatmul) {
  std::mt19937_64 rng(3);
  nn::ParamStore store(3);
  const auto cfg = small_cfg();
  GraphEncoder enc(store, "gnn", cfg, kRels);
  const Matrix h = randn(rng, 5, cfg.hidden), v = randn(rng, 5, cfg.node_type_dim), r = randn(rng, 5, cfg.rel_type_dim);
  Matrix x(5, cfg.hidden + cfg.node_type_dim + cfg.rel_type_dim);
  x << h, v, r;
  const Matrix got = enc.message(ag::constant(h), ag::constant(v), ag::constant(r), 1).value();
  EXPECT_TRUE(got.isApprox(affine(store, "gnn.layer1.f_msg", x), 1e-14));

  store.find("gnn.layer0.f_msg.weight")->var.mutable_value().setZero();
  EXPECT_EQ(enc.message(ag::constant(h), ag::constant(v), ag::constant(r), 0).value().cwiseAbs().maxCoeff(), 0.0);
  auto& w = store.find("gnn.layer0.f_msg.weight")->var.mutable_value();
  w.topRows(cfg.hidden) = Matrix::Identity(cfg.hidden, cfg.hidden);
  EXPECT_EQ(enc.message(ag::constant(h), ag::constant(v), ag::constant(r), 0).value(), h);
  EXPECT_THROW(enc.message(ag::constant(h), ag::constant(v), ag::constant(Matrix::Zero(5, 1)), 0), Error);
}

TEST(GraphEncoder, UnknownRelationAndEmptyGraph) {
  nn::ParamStore store(4);
  GraphEncoder enc(store, "gnn", small_cfg(), kRels);
  auto g = two_node_graph();
  g.edges[0].relation = "no_such_relation";
  try {
    enc.type_embeddings(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownRelation);
  }
  try {
    enc.encode(EvidenceGraph{}, ag::constant(Matrix::Zero(0, 6)), ag::constant(Matrix::Zero(0, 1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyGraph);
  }
}

TEST(GraphEncoder, IsolatedNodeAttendsOnlyToItself) {
  std::mt19937_64 rng(5);
  nn::ParamStore store(5);
  GraphEncoder enc(store, "gnn", small_cfg(), kRels);
  EvidenceGraph g;
  g.nodes = {{0, "a", NodeType::kQuestion, 0.3, {}}};
  const auto w = enc.attention(ag::constant(randn(rng, 1, 6)), g, GraphEncoder::constant_relevance(g), 0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].weight, 1.0);
  EXPECT_TRUE(w[0].relation.empty());
}

TEST(GraphEncoder, EqualScoresSplitEvenly) {
  std::mt19937_64 rng(6);
  nn::ParamStore store(6);
  GraphEncoder enc(store, "gnn", small_cfg(), kRels);
  store.find("gnn.layer0.f_q.weight")->var.mutable_value().setZero();
  const auto g = two_node_graph();
  for (const auto& w : enc.attention(ag::constant(randn(rng, 2, 6)), g, GraphEncoder::constant_relevance(g), 0)) {
    EXPECT_NEAR(w.weight, 0.5, 1e-15);
  }
}

TEST(GraphEncoder, ZeroUpdateLeavesStatesUnchanged) {
  std::mt19937_64 rng(7);
  nn::ParamStore store(7);
  GraphEncoder enc(store, "gnn", small_cfg(3), kRels);
  for (int l = 0; l < 3; ++l) {
    store.find("gnn.layer" + std::to_string(l) + ".f_n.weight")->var.mutable_value().setZero();
  }
  const auto g = oracle::random_graph(rng, 7, kRels, 0.4);
  const Matrix init = randn(rng, 7, 6);
  for (bool training : {false, true}) {
    enc.set_training(training);
    const auto out = enc.encode(g, ag::constant(init), GraphEncoder::constant_relevance(g));
    EXPECT_EQ(out.node_states.value(), init);
  }
}

TEST(GraphEncoder, ZeroLayersPoolsInitialEmbeddings) {
  std::mt19937_64 rng(8);
  nn::ParamStore store(8);
  GraphEncoder enc(store, "gnn", small_cfg(0), kRels);
  const auto g = oracle::random_graph(rng, 5, kRels, 0.4);
  const Matrix init = randn(rng, 5, 6);
  const auto out = enc.encode(g, ag::constant(init), GraphEncoder::constant_relevance(g));
  EXPECT_TRUE(out.graph_vector.value().isApprox(init.colwise().mean(), 1e-15));
  const Matrix same = Matrix::Ones(5, 1) * init.row(2);
  EXPECT_TRUE(enc.encode(g, ag::constant(same), GraphEncoder::constant_relevance(g)).graph_vector.value().isApprox(init.row(2)));
}

TEST(GraphEncoder, SingleNodeMatchesHandUpdate) {
  std::mt19937_64 rng(9);
  nn::ParamStore store(9);
  GraphEncoder enc(store, "gnn", small_cfg(1), kRels);
  detail::perturb_batch_norm(store, rng);
  EvidenceGraph g;
  g.nodes = {{0, "a", NodeType::kOther, 0.3, {}}};
  const Matrix h0 = randn(rng, 1, 6);
  Matrix onehot = Matrix::Zero(1, 4);
  onehot(0, 2) = 1;
  const Matrix v = affine(store, "gnn.f_v", onehot);
  Matrix rel_in = Matrix::Zero(1, 13);
  rel_in(0, 2) = 1, rel_in(0, 6) = 1, rel_in(0, 12) = 1;
  const Matrix r = affine(store, "gnn.f_r", rel_in);
  Matrix x(1, 6 + 3 + 4);
  x << h0, v, r;
  const Matrix upd = affine(store, "gnn.layer0.f_n", affine(store, "gnn.layer0.f_msg", x));
  const Eigen::ArrayXXd bn = (upd - W(store, "gnn.layer0.bn.running_mean")).array() /
                                 (W(store, "gnn.layer0.bn.running_var").array() + 1e-5).sqrt() *
                                 W(store, "gnn.layer0.bn.gamma").array() +
                             W(store, "gnn.layer0.bn.beta").array();
  const auto out = enc.encode(g, ag::constant(h0), GraphEncoder::constant_relevance(g));
  EXPECT_TRUE(out.node_states.value().isApprox(bn.matrix() + h0, 1e-13));
}

TEST(GraphEncoder, MatchesDenseOracle) {
  const auto c = verify::oracle_equivalence(40, 10, 99);
  EXPECT_TRUE(c.passed) << c.value;
}

TEST(GraphEncoder, AttentionRowsSumToOne) {
  const auto c = verify::attention_normalization(200, 101);
  EXPECT_TRUE(c.passed) << c.value;
}

TEST(GraphEncoder, PermutationEquivariance) {
  std::mt19937_64 rng(10);
  nn::ParamStore store(10);
  GraphEncoder enc(store, "gnn", small_cfg(3), kRels);
  detail::perturb_batch_norm(store, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_graph(rng, 8, kRels, 0.35);
    const Matrix init = randn(rng, 8, 6);
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EvidenceGraph h = g;
    Matrix init_p(8, 6);
    for (int i = 0; i < 8; ++i) {
      h.nodes[static_cast<std::size_t>(i)] = g.nodes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      init_p.row(i) = init.row(perm[static_cast<std::size_t>(i)]);
    }
    for (bool training : {false, true}) {
      enc.set_training(training);
      const auto a = enc.encode(g, ag::constant(init), GraphEncoder::constant_relevance(g));
      const auto b = enc.encode(h, ag::constant(init_p), GraphEncoder::constant_relevance(h));
      for (int i = 0; i < 8; ++i) {
        EXPECT_LT((b.node_states.value().row(i) - a.node_states.value().row(perm[static_cast<std::size_t>(i)])).norm(), 1e-10);
      }
      EXPECT_LT((a.graph_vector.value() - b.graph_vector.value()).norm(), 1e-10);
    }
  }
}

TEST(GraphEncoder, BatchEqualsSeparateEncodesInEvalMode) {
  std::mt19937_64 rng(11);
  nn::ParamStore store(11);
  GraphEncoder enc(store, "gnn", small_cfg(2), kRels);
  detail::perturb_batch_norm(store, rng);
  std::vector<EvidenceGraph> gs;
  std::vector<ag::Var> init, lam;
  for (int i = 0; i < 3; ++i) {
    gs.push_back(oracle::random_graph(rng, 3 + i, kRels, 0.5));
    init.push_back(ag::constant(randn(rng, 3 + i, 6)));
    lam.push_back(GraphEncoder::constant_relevance(gs.back()));
  }
  const auto batch = enc.encode_batch({&gs[0], &gs[1], &gs[2]}, init, lam);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto one = enc.encode(gs[i], init[i], lam[i]);
    EXPECT_TRUE(batch[i].node_states.value().isApprox(one.node_states.value(), 1e-13));
    EXPECT_TRUE(batch[i].graph_vector.value().isApprox(one.graph_vector.value(), 1e-13));
  }
}

TEST(GraphEncoder, GradientCheck) {
  const auto r = grad_check_component("graph-encoder");
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 100u);
}
