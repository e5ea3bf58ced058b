#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "gsap/evidence_graph.hpp"
#include "gsap/oracle.hpp"
#include "gsap/synthetic.hpp"

using namespace gsap;

namespace {

using EdgeKey = std::tuple<std::string, std::string, std::string>;

TripleStore store_of(std::initializer_list<Triple> ts) {
  TripleStore s;
  for (const auto& t : ts) s.add(t.head, t.relation, t.tail);
  return s;
}

// Tries every span [i, j) and keeps the longest lexicon hit starting at i,
// with no bound on span length.
std::vector<std::string> span_scan(const std::string& sentence, const std::set<std::string>& lexicon) {
  std::vector<std::string> toks;
  std::string cur;
  for (char ch : sentence + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      toks.push_back(cur);
      cur.clear();
    }
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < toks.size()) {
    std::size_t best = 0;
    std::string hit;
    for (std::size_t j = i + 1; j <= toks.size(); ++j) {
      std::string span;
      for (std::size_t k = i; k < j; ++k) span += (k > i ? " " : "") + toks[k];
      if (lexicon.count(span)) {
        best = j - i;
        hit = span;
      }
    }
    if (best) {
      if (std::find(out.begin(), out.end(), hit) == out.end()) out.push_back(hit);
      i += best;
    } else {
      ++i;
    }
  }
  return out;
}

std::set<EdgeKey> edge_keys(const EvidenceGraph& g) {
  std::set<EdgeKey> out;
  for (const auto& e : g.edges) out.insert({g.node(e.head).surface, e.relation, g.node(e.tail).surface});
  return out;
}

std::map<std::string, NodeType> node_types(const EvidenceGraph& g) {
  std::map<std::string, NodeType> out;
  for (const auto& n : g.nodes) out[n.surface] = n.type;
  return out;
}

}  // namespace

TEST(EvidenceGraph, ExtractExamples) {
  const auto s = store_of({{"cat", "desires", "drink"}, {"milk", "is_a", "drink"}});
  const auto te = extract_topic_entities("what do cats drink", {"milk", "water"}, s);
  EXPECT_EQ(te.question, std::vector<std::string>{"drink"});  // "cats" is not "cat"
  const auto te2 = extract_topic_entities("what do cat drink", {"milk", "water"}, s);
  EXPECT_EQ(te2.question, (std::vector<std::string>{"cat", "drink"}));
  ASSERT_EQ(te2.choices.size(), 1u);
  EXPECT_EQ(te2.choices[0], (ChoiceEntity{"milk", 0}));
  EXPECT_TRUE(te2.for_choice(1).empty());
}

TEST(EvidenceGraph, UngroundedQuestionThrows) {
  const auto s = store_of({{"cat", "r", "dog"}});
  try {
    extract_topic_entities("nothing here", {"cat"}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kQuestionUngrounded);
  }
  EXPECT_THROW(extract_topic_entities("cat", {}, s), Error);
}

TEST(EvidenceGraph, LongestMatchPrefersMultiwordEntity) {
  const auto s = store_of({{"ice cream", "is_a", "dessert"}, {"ice", "is_a", "water"}, {"cream", "r", "milk"}});
  EXPECT_EQ(match_entities("I like ice cream and ice", s), (std::vector<std::string>{"ice cream", "ice"}));
}

TEST(EvidenceGraph, ExtractMatchesSpanScanOnSyntheticQuestions) {
  const auto task = generate_synthetic({.seed = 3, .n_train = 30, .n_dev = 0, .n_test = 0});
  const auto ents = task.sources.triples.entities();
  const std::set<std::string> lexicon(ents.begin(), ents.end());
  for (const auto& qa : task.train) {
    const auto te = extract_topic_entities(qa.question, qa.choices, task.sources.triples);
    EXPECT_EQ(te.question, span_scan(qa.question, lexicon)) << qa.question;
    for (std::size_t c = 0; c < qa.choices.size(); ++c) {
      EXPECT_EQ(te.for_choice(static_cast<int>(c)), span_scan(qa.choices[c], lexicon)) << qa.choices[c];
    }
  }
}

TEST(EvidenceGraph, MinimalGraphHasOneRelatedQaEdge) {
  const auto g = build_graph({"a"}, {"b"}, TripleStore{}, ParaphraseDict{});
  ASSERT_EQ(g.nodes.size(), 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].relation, "RelatedQA");
  EXPECT_EQ(g.node(g.edges[0].head).type, NodeType::kQuestion);
  EXPECT_EQ(g.node(g.edges[0].tail).type, NodeType::kChoice);
  EXPECT_THROW(build_graph({}, {"b"}, TripleStore{}, ParaphraseDict{}), Error);
}

TEST(EvidenceGraph, ParaphraseEntityAttachedWithDefTop) {
  const auto s = store_of({{"animal", "is_a", "organism"}, {"cat", "r", "dog"}});
  ParaphraseDict para;
  para.add("cat", "a small domesticated animal");
  GraphBuildConfig cfg;
  cfg.use_kg_paths = false;
  const auto g = build_graph({"cat"}, {"dog"}, s, para, cfg);
  const int animal = g.find_surface("animal");
  ASSERT_GE(animal, 0);
  EXPECT_EQ(g.node(animal).type, NodeType::kParaphrase);
  EXPECT_TRUE(edge_keys(g).count({"cat", "DefTop", "animal"}));
  cfg.use_paraphrase_nodes = false;
  EXPECT_LT(build_graph({"cat"}, {"dog"}, s, para, cfg).find_surface("animal"), 0);
}

TEST(EvidenceGraph, BuildMatchesSetComprehension) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> rels{"is_a", "part_of", "used_for"};
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 18;
    std::uniform_int_distribution<int> node(0, n - 1);
    std::uniform_int_distribution<std::size_t> rel(0, rels.size() - 1);
    TripleStore store;
    std::vector<Triple> raw;
    for (int i = 0; i < 22; ++i) {
      const Triple t{"w" + std::to_string(node(rng)), rels[rel(rng)], "w" + std::to_string(node(rng))};
      raw.push_back(t);
      store.add(t.head, t.relation, t.tail);
    }
    const std::vector<std::string> vq{"w0", "w1"};
    const std::vector<std::string> vc{"w2", "w" + std::to_string(3 + trial % 10)};
    ParaphraseDict para;
    para.add("w0", "related to w" + std::to_string(5 + trial % 7) + " and w1");
    const std::set<std::string> topics{vq[0], vq[1], vc[0], vc[1]};

    std::set<std::pair<std::string, std::string>> adjacent;  // unordered pairs, both ways
    for (const auto& t : raw) {
      if (t.head == t.tail) continue;
      adjacent.insert({t.head, t.tail});
      adjacent.insert({t.tail, t.head});
    }
    auto adj = [&](const std::string& a, const std::string& b) { return adjacent.count({a, b}) > 0; };
    std::set<EdgeKey> want_edges;
    std::set<std::string> path_nodes;
    for (const auto& t : raw) {
      if (t.head == t.tail) continue;
      bool on_path = topics.count(t.head) || topics.count(t.tail);
      for (const auto& tp : topics) {
        on_path = on_path || (adj(tp, t.head) && t.tail != tp) || (adj(tp, t.tail) && t.head != tp);
      }
      if (on_path) {
        want_edges.insert({t.head, t.relation, t.tail});
        path_nodes.insert(t.head);
        path_nodes.insert(t.tail);
      }
    }
    for (const auto& q : vq) {
      for (const auto& c : vc) want_edges.insert({q, "RelatedQA", c});
    }
    std::set<std::string> lexicon;
    for (const auto& e : store.entities()) lexicon.insert(e);
    std::set<std::string> para_nodes;
    for (const auto& e : span_scan(*para.lookup("w0"), lexicon)) {
      if (e == "w0") continue;
      want_edges.insert({"w0", "DefTop", e});
      para_nodes.insert(e);
    }
    std::map<std::string, NodeType> want_types;
    for (const auto& p : para_nodes) want_types[p] = NodeType::kParaphrase;
    for (const auto& p : path_nodes) want_types[p] = NodeType::kOther;
    for (const auto& c : vc) want_types[c] = NodeType::kChoice;
    for (const auto& q : vq) want_types[q] = NodeType::kQuestion;

    const auto g = build_graph(vq, vc, store, para, {.max_paths = 100000});
    EXPECT_EQ(edge_keys(g), want_edges) << "trial " << trial;
    EXPECT_EQ(node_types(g), want_types) << "trial " << trial;
    EXPECT_EQ(g.edges.size(), want_edges.size());

    std::size_t related = 0;
    for (const auto& e : g.edges) related += e.relation == "RelatedQA" ? 1 : 0;
    EXPECT_EQ(related, vq.size() * vc.size());
    for (const auto& e : g.edges) {
      EXPECT_NE(e.head, e.tail);
      EXPECT_GE(g.index_of(e.head), 0);
      EXPECT_GE(g.index_of(e.tail), 0);
    }
  }
}

TEST(EvidenceGraph, RelevanceZeroWeightsGiveHalf) {
  nn::ParamStore ps(1);
  RelevanceScorer scorer(ps, "rel", 3, nn::ParamGroup::kGraph);
  for (auto& p : ps.all()) p.var.mutable_value().setZero();
  auto g = build_graph({"a", "c"}, {"b"}, TripleStore{}, ParaphraseDict{});
  const TextEmbedder phi = [](std::string_view s) {
    ag::RowVector v(3);
    v << static_cast<double>(s.size()), 1.0, -2.0;
    return v;
  };
  score_relevance(g, phi, scorer);
  for (const auto& n : g.nodes) EXPECT_EQ(n.relevance, 0.5);
}

TEST(EvidenceGraph, RelevanceMatchesHandAffineSigmoid) {
  nn::ParamStore ps(2);
  RelevanceScorer scorer(ps, "rel", 2, nn::ParamGroup::kGraph);
  ps.find("rel.weight")->var.mutable_value() = (ag::Matrix(4, 1) << 0.5, -1.0, 2.0, 0.25).finished();
  ps.find("rel.bias")->var.mutable_value() = ag::Matrix::Constant(1, 1, -0.3);
  EvidenceGraph g;
  g.question_text = "qq";
  const std::vector<std::string> surfaces{"a", "bb", "ccc", "dddd", "eeeee"};
  for (int i = 0; i < 5; ++i) g.nodes.push_back({i, surfaces[static_cast<std::size_t>(i)], NodeType::kOther, 0.5, {}});
  const TextEmbedder phi = [](std::string_view s) {
    ag::RowVector v(2);
    v << static_cast<double>(s.size()) * 0.4, s.front() == 'q' ? 1.0 : -0.5;
    return v;
  };
  const ag::Var lam = scorer.score(g, phi);
  for (int i = 0; i < 5; ++i) {
    const double len = static_cast<double>(i + 1) * 0.4;
    const double z = 0.5 * len + -1.0 * -0.5 + 2.0 * (2 * 0.4) + 0.25 * 1.0 - 0.3;
    const double want = 1.0 / (1.0 + std::exp(-z));
    EXPECT_NEAR(g.nodes[static_cast<std::size_t>(i)].relevance, want, 1e-12);
    EXPECT_NEAR(lam.value()(i, 0), want, 1e-12);
    EXPECT_GT(want, 0.0);
    EXPECT_LT(want, 1.0);
  }
}

TEST(EvidenceGraph, PruneExamples) {
  EvidenceGraph g;
  g.nodes = {{0, "q", NodeType::kQuestion, 0.01, {}},
             {1, "c", NodeType::kChoice, 0.02, {}},
             {2, "low", NodeType::kOther, 0.05, {}},
             {3, "high", NodeType::kParaphrase, 0.5, {}},
             {4, "edge", NodeType::kOther, 0.1, {}}};
  g.edges = {{0, 2, "r"}, {2, 1, "r"}, {0, 3, "DefTop"}, {4, 1, "r"}, {0, 1, "RelatedQA"}};
  const auto p = prune(g, 0.1);
  std::set<std::string> kept;
  for (const auto& n : p.nodes) kept.insert(n.surface);
  EXPECT_EQ(kept, (std::set<std::string>{"q", "c", "high", "edge"}));
  EXPECT_EQ(p.edges.size(), 3u);
  const auto same = prune(g, 0.0);
  EXPECT_EQ(same.nodes.size(), g.nodes.size());
  EXPECT_EQ(same.edges, g.edges);
  EXPECT_THROW(prune(g, 1.0), Error);
  EXPECT_THROW(prune(g, -0.1), Error);
}

TEST(EvidenceGraph, PruneMatchesFilterOracleAndIsIdempotent) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 0.999);
  const std::vector<std::string> rels{"r1", "r2", "RelatedQA"};
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_graph(rng, 2 + trial % 12, rels, 0.3);
    const double theta = trial % 3 == 0 ? 0.1 : unit(rng);
    std::set<std::string> want;
    for (const auto& n : g.nodes) {
      if (n.type == NodeType::kQuestion || n.type == NodeType::kChoice || n.relevance >= theta) want.insert(n.surface);
    }
    std::set<EdgeKey> want_edges;
    for (const auto& [h, r, t] : edge_keys(g)) {
      if (want.count(h) && want.count(t)) want_edges.insert({h, r, t});
    }
    const auto p = prune(g, theta);
    std::set<std::string> got;
    for (const auto& n : p.nodes) got.insert(n.surface);
    EXPECT_EQ(got, want);
    EXPECT_EQ(edge_keys(p), want_edges);
    const auto pp = prune(p, theta);
    EXPECT_EQ(pp.nodes.size(), p.nodes.size());
    EXPECT_EQ(pp.edges, p.edges);
  }
}

TEST(EvidenceGraph, TripletExamples) {
  EvidenceGraph g;
  g.nodes = {{0, "q", NodeType::kQuestion, 0.9, {}}, {1, "c", NodeType::kChoice, 0.8, {}}};
  g.edges = {{0, 1, "RelatedQA"}};
  EXPECT_EQ(select_qc_triplets(g), (std::vector<QCTriplet>{{0, "RelatedQA", 1}}));

  g.nodes.push_back({2, "m", NodeType::kOther, 0.5, {}});
  g.edges.push_back({0, 2, "r1"});
  g.edges.push_back({2, 1, "r2"});
  const auto t = select_qc_triplets(g);
  EXPECT_EQ(t, (std::vector<QCTriplet>{{0, "RelatedQA", 1}, {2, "r2", 1}, {0, "r1", 2}}));
}

TEST(EvidenceGraph, TripletsMatchShortestPathEnumeration) {
  std::mt19937_64 rng(41);
  const std::vector<std::string> rels{"r1", "r2", "r3"};
  for (int trial = 0; trial < 150; ++trial) {
    auto g = oracle::random_graph(rng, 3 + trial % 10, rels, 0.3);
    std::set<std::pair<int, int>> adj;
    for (const auto& e : g.edges) {
      adj.insert({e.head, e.tail});
      adj.insert({e.tail, e.head});
    }
    for (const auto& q : g.nodes) {
      for (const auto& c : g.nodes) {
        if (q.type == NodeType::kQuestion && c.type == NodeType::kChoice) g.edges.push_back({q.id, c.id, "RelatedQA"});
      }
    }
    std::set<std::tuple<int, std::string, int>> want;
    for (const auto& e : g.edges) {
      if (e.relation == "RelatedQA") want.insert({e.head, e.relation, e.tail});
    }
    for (const auto& q : g.nodes) {
      if (q.type != NodeType::kQuestion) continue;
      for (const auto& c : g.nodes) {
        if (c.type != NodeType::kChoice) continue;
        if (adj.count({q.id, c.id})) {
          for (const auto& e : g.edges) {
            const bool qc = (e.head == q.id && e.tail == c.id) || (e.head == c.id && e.tail == q.id);
            if (qc && e.relation != "RelatedQA") want.insert({e.head, e.relation, e.tail});
          }
          continue;
        }
        for (const auto& m : g.nodes) {
          if (!adj.count({q.id, m.id}) || !adj.count({m.id, c.id})) continue;
          for (const auto& e : g.edges) {
            if (e.relation == "RelatedQA") continue;
            const auto ends = std::minmax(e.head, e.tail);
            if (ends == std::minmax(q.id, m.id) || ends == std::minmax(m.id, c.id)) want.insert({e.head, e.relation, e.tail});
          }
        }
      }
    }
    const auto got = select_qc_triplets(g);
    std::set<std::tuple<int, std::string, int>> got_set;
    for (const auto& t : got) got_set.insert({t.head, t.relation, t.tail});
    EXPECT_EQ(got_set, want) << "trial " << trial;
    EXPECT_EQ(got_set.size(), got.size());
    for (std::size_t i = 1; i < got.size(); ++i) {
      auto key = [&](const QCTriplet& t) { return std::min(g.node(t.head).relevance, g.node(t.tail).relevance); };
      EXPECT_GE(key(got[i - 1]), key(got[i]));
    }
  }
}

TEST(EvidenceGraph, TripletsInvariantUnderRelabeling) {
  std::mt19937_64 rng(43);
  const std::vector<std::string> rels{"r1", "r2"};
  for (int trial = 0; trial < 50; ++trial) {
    auto g = oracle::random_graph(rng, 8, rels, 0.35);
    g.edges.push_back({0, 1, "RelatedQA"});
    std::vector<int> perm(g.nodes.size());
    std::iota(perm.begin(), perm.end(), 100);
    std::shuffle(perm.begin(), perm.end(), rng);
    EvidenceGraph h = g;
    for (auto& n : h.nodes) n.id = perm[static_cast<std::size_t>(n.id)];
    for (auto& e : h.edges) {
      e.head = perm[static_cast<std::size_t>(e.head)];
      e.tail = perm[static_cast<std::size_t>(e.tail)];
    }
    std::shuffle(h.nodes.begin(), h.nodes.end(), rng);
    std::shuffle(h.edges.begin(), h.edges.end(), rng);
    auto surfaces = [](const EvidenceGraph& x) {
      std::vector<EdgeKey> out;
      for (const auto& t : select_qc_triplets(x)) out.push_back({x.node(t.head).surface, t.relation, x.node(t.tail).surface});
      return out;
    };
    EXPECT_EQ(surfaces(g), surfaces(h));
  }
}

TEST(EvidenceGraph, JsonDumpShape) {
  const auto g = build_graph({"a"}, {"b"}, TripleStore{}, ParaphraseDict{});
  const auto j = graph_to_json(g);
  ASSERT_EQ(j["nodes"].size(), 2u);
  EXPECT_EQ(j["nodes"][0]["type"], std::string(to_string(NodeType::kQuestion)));
  EXPECT_EQ(j["edges"][0]["relation"], "RelatedQA");
  EXPECT_TRUE(j["nodes"][1].contains("relevance"));
}
