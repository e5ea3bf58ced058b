#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "gsap/knowledge_store.hpp"

using namespace gsap;

namespace {

TripleStore parse_triples(const std::string& text) {
  TripleStore s;
  std::istringstream in(text);
  read_triples(in, "kg.tsv", s);
  return s;
}

std::vector<std::string> keys(const std::vector<TriplePath>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(path_key(p));
  return out;
}

// Exhaustive DFS over an undirected adjacency built straight from the raw
// triple list, independent of the store's index.
std::vector<std::string> brute_force_paths(const std::vector<Triple>& triples, const std::set<std::string>& topics,
                                           std::size_t max_hops, std::size_t max_paths) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> adj;  // node -> (relation, other)
  std::set<Triple> unique(triples.begin(), triples.end());
  for (const auto& t : unique) {
    if (t.head == t.tail) continue;
    adj[t.head].push_back({t.relation, t.tail});
    adj[t.tail].push_back({t.relation, t.head});
  }
  std::vector<std::string> out;
  std::function<void(const std::string&, std::vector<std::string>&, std::string, std::size_t)> dfs =
      [&](const std::string& at, std::vector<std::string>& seen, std::string key, std::size_t left) {
        if (left == 0) return;
        for (const auto& [rel, next] : adj[at]) {
          if (std::find(seen.begin(), seen.end(), next) != seen.end()) continue;
          std::string k = key + '\x1f' + rel + '\x1f' + next;
          out.push_back(k);
          seen.push_back(next);
          dfs(next, seen, k, left - 1);
          seen.pop_back();
        }
      };
  for (const auto& t : topics) {
    if (!adj.count(t)) continue;
    std::vector<std::string> seen{t};
    dfs(t, seen, t, max_hops);
  }
  std::sort(out.begin(), out.end());
  if (out.size() > max_paths) out.resize(max_paths);
  return out;
}

std::vector<Triple> random_triples(std::mt19937_64& rng, int nodes, int edges) {
  const std::vector<std::string> rels{"is_a", "part_of", "used_for", "at_location"};
  std::uniform_int_distribution<int> node(0, nodes - 1);
  std::uniform_int_distribution<int> rel(0, 3);
  std::vector<Triple> out;
  for (int i = 0; i < edges; ++i) {
    out.push_back({"e" + std::to_string(node(rng)), rels[static_cast<std::size_t>(rel(rng))],
                   "e" + std::to_string(node(rng))});
  }
  return out;
}

TripleStore store_from(const std::vector<Triple>& ts) {
  TripleStore s;
  for (const auto& t : ts) s.add(t.head, t.relation, t.tail);
  return s;
}

}  // namespace

TEST(KnowledgeStore, ThreeLineFile) {
  const auto s = parse_triples("apple\tis_a\tfruit\n# comment\n\nfruit\tpart_of\tplant\nApple\tused_for\tPie\n");
  EXPECT_EQ(s.size(), 3u);
  EXPECT_LE(s.entity_count(), 6u);
  for (const auto& t : s.triples()) {
    EXPECT_TRUE(s.contains_entity(t.head));
    EXPECT_TRUE(s.contains_entity(t.tail));
  }
  EXPECT_TRUE(s.contains_entity("APPLE"));
  EXPECT_EQ(s.relation_vocab()[0], "DefTop");
  EXPECT_EQ(s.relation_vocab()[1], "RelatedQA");
  EXPECT_TRUE(s.relation_index("part_of").has_value());
}

TEST(KnowledgeStore, ReservedRelationsPresentWhenEmpty) {
  const auto ks = load_store({}, {}, {});
  ASSERT_EQ(ks.triples.relation_vocab().size(), 2u);
  EXPECT_EQ(ks.paraphrases.size(), 0u);
  EXPECT_FALSE(ks.paraphrases.lookup("anything").has_value());
  EXPECT_TRUE(ks.corpus.retrieve("anything", 10).empty());
}

TEST(KnowledgeStore, UnderscoresAndCaseNormalize) {
  const auto s = parse_triples("Ice_Cream\tis_a\tdessert\n");
  EXPECT_EQ(s.triples()[0].head, "ice cream");
  EXPECT_TRUE(s.contains_entity("ICE cream"));
  EXPECT_EQ(s.max_entity_words(), 2u);
}

TEST(KnowledgeStore, DuplicatesMatchSetOracle) {
  std::mt19937_64 rng(5);
  auto ts = random_triples(rng, 8, 80);  // small node set forces repeats
  std::ostringstream file;
  std::set<Triple> oracle;
  for (const auto& t : ts) {
    const bool upper = rng() % 2;
    std::string h = t.head;
    if (upper) std::transform(h.begin(), h.end(), h.begin(), ::toupper);
    file << h << '\t' << t.relation << '\t' << t.tail << '\n';
    oracle.insert(t);
  }
  EXPECT_EQ(parse_triples(file.str()).size(), oracle.size());
}

TEST(KnowledgeStore, MalformedLineNamesFileAndLine) {
  try {
    parse_triples("a\tis_a\tb\nbroken line\n");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("kg.tsv:2"), std::string::npos) << e.what();
  }
  ParaphraseDict d;
  std::istringstream para("ok\tdefinition\nno tab here\n");
  try {
    read_paraphrases(para, "para.tsv", d);
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("para.tsv:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_store("/nonexistent/kg.tsv", {}, {}), Error);
}

TEST(KnowledgeStore, ChainPaths) {
  const auto s = parse_triples("a\tr\tb\nb\tr\tc\n");
  const auto paths = s.query_paths({"a"}, 2, 100);
  ASSERT_EQ(paths.size(), 2u);
  ASSERT_EQ(paths[0].size(), 1u);
  EXPECT_EQ(paths[0][0].to, "b");
  ASSERT_EQ(paths[1].size(), 2u);
  EXPECT_EQ(paths[1][1].from, "b");
  EXPECT_EQ(paths[1][1].to, "c");
  EXPECT_TRUE(s.query_paths({"a"}, 2, 0).empty());
  EXPECT_TRUE(s.query_paths({"zzz"}, 2, 10).empty());
  EXPECT_THROW(s.query_paths({"a"}, 0, 10), Error);
}

TEST(KnowledgeStore, PathsWalkAgainstStoredOrientation) {
  const auto s = parse_triples("b\tpart_of\ta\n");
  const auto paths = s.query_paths({"a"}, 1, 10);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0][0].from, "a");
  EXPECT_EQ(paths[0][0].to, "b");
  EXPECT_EQ(s.triples()[paths[0][0].triple_id].head, "b");
}

TEST(KnowledgeStore, QueryPathsMatchesExhaustiveDfs) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ts = random_triples(rng, 20, 35);
    const auto s = store_from(ts);
    const std::set<std::string> topics{"e0", "e" + std::to_string(trial % 20), "missing"};
    const std::size_t cap = trial % 3 == 0 ? 7 : 1000;
    const auto got = keys(s.query_paths({topics.begin(), topics.end()}, 2, cap));
    EXPECT_EQ(got, brute_force_paths(ts, topics, 2, cap)) << "trial " << trial;
    for (const auto& p : s.query_paths({topics.begin(), topics.end()}, 2, cap)) {
      EXPECT_TRUE(topics.count(p.front().from));
      EXPECT_LE(p.size(), 2u);
    }
  }
}

TEST(KnowledgeStore, QueryPathsInvariantToLineOrderAndReversal) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto ts = random_triples(rng, 15, 30);
    const auto base = keys(store_from(ts).query_paths({"e1", "e2"}, 2, 25));
    auto shuffled = ts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(keys(store_from(shuffled).query_paths({"e1", "e2"}, 2, 25)), base);
    auto reversed = ts;
    for (auto& t : reversed) std::swap(t.head, t.tail);
    EXPECT_EQ(keys(store_from(reversed).query_paths({"e1", "e2"}, 2, 25)), base);
  }
}

TEST(KnowledgeStore, RetrieveSingleSentenceAndZero) {
  EvidenceCorpus c;
  c.add("The only sentence.");
  EXPECT_EQ(c.retrieve("unrelated", 10), std::vector<std::string>{"The only sentence."});
  EXPECT_TRUE(c.retrieve("only", 0).empty());
}

TEST(KnowledgeStore, RetrieveMatchesFullSortAndIsPrefixClosed) {
  std::mt19937_64 rng(12);
  const std::vector<std::string> lexicon{"cat", "dog", "sun", "tree", "rock", "blue", "fast", "cold"};
  std::uniform_int_distribution<std::size_t> word(0, lexicon.size() - 1);
  std::uniform_int_distribution<int> len(1, 6);
  EvidenceCorpus c;
  std::vector<std::string> sentences;
  for (int i = 0; i < 50; ++i) {
    std::string s;
    const int n = len(rng);
    for (int w = 0; w < n; ++w) s += (w ? " " : "") + lexicon[word(rng)];
    s += " #" + std::to_string(i);
    sentences.push_back(s);
    c.add(s);
  }
  const std::string question = "Is the dog Cold near a tree?";
  const std::set<std::string> q{"is", "the", "dog", "cold", "near", "a", "tree"};
  std::vector<std::pair<int, int>> scored;  // (-overlap, index)
  for (int i = 0; i < 50; ++i) {
    std::set<std::string> toks;
    std::istringstream in(sentences[static_cast<std::size_t>(i)]);
    for (std::string w; in >> w;) toks.insert(w);
    int overlap = 0;
    for (const auto& w : toks) overlap += q.count(w) ? 1 : 0;
    scored.push_back({-overlap, i});
  }
  std::sort(scored.begin(), scored.end());
  for (std::size_t k : {0u, 1u, 5u, 10u, 50u, 80u}) {
    std::vector<std::string> want;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
      want.push_back(sentences[static_cast<std::size_t>(scored[i].second)]);
    }
    EXPECT_EQ(c.retrieve(question, k), want) << "k=" << k;
  }
  const auto small = c.retrieve(question, 7);
  const auto large = c.retrieve(question, 23);
  EXPECT_TRUE(std::equal(small.begin(), small.end(), large.begin()));
}

TEST(KnowledgeStore, ParaphraseLookupIsCaseNormalized) {
  ParaphraseDict d;
  std::istringstream in("Ice_Cream\ta frozen dessert\n");
  read_paraphrases(in, "p.tsv", d);
  EXPECT_EQ(d.lookup("ice cream").value(), "a frozen dessert");
  EXPECT_THROW(d.add("x", "   "), Error);
}
