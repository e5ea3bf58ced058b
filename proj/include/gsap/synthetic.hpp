#pragma once

// Desk-scale stand-in for the commonsense QA benchmarks: a random typed
// knowledge graph over pseudo-word entities, and questions whose gold choice
// is within two hops of the question entity while every distractor is not.

#include <algorithm>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gsap/core/error.hpp"
#include "gsap/core/text.hpp"
#include "gsap/dataset.hpp"
#include "gsap/knowledge_store.hpp"

namespace gsap {

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int n_train = 500;
  int n_dev = 200;
  int n_test = 0;
  int choices = 4;  // b
  int kg_size = 600;
  double avg_degree = 2.5;
  int max_gold_hops = 2;
};

struct SyntheticTask {
  std::vector<QAInstance> train;
  std::vector<QAInstance> dev;
  std::vector<QAInstance> test;
  KnowledgeSources sources;
  std::vector<std::string> entities;
};

inline const std::vector<std::string>& synthetic_relations() {
  static const std::vector<std::string> r{"related_to", "is_a", "part_of", "used_for", "at_location", "capable_of"};
  return r;
}

inline const std::vector<std::string>& synthetic_templates() {
  static const std::vector<std::string> t{"what is linked to {} ?", "which thing goes with {} ?",
                                          "what do people connect with {} ?", "{} is associated with what ?"};
  return t;
}

/// Undirected hop distances from `src` over the store's triples (-1 = unreachable).
inline std::vector<int> synthetic_distances(const std::vector<std::vector<int>>& adj, int src) {
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

inline SyntheticTask generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_train < 1 || cfg.choices < 2) {
    throw Error(ErrorCode::kInvalidArgument, "generate_synthetic needs n >= 1 and b >= 2");
  }
  if (cfg.choices > kMaxChoices) throw Error(ErrorCode::kInvalidArgument, "at most 5 choices");
  if (cfg.kg_size < 4 * cfg.choices) throw Error(ErrorCode::kInvalidArgument, "kg_size too small");
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  // Pseudo-word entities: 2-3 consonant-vowel syllables, all distinct and
  // disjoint from the template vocabulary.
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::set<std::string> reserved;
  for (const auto& t : synthetic_templates()) {
    for (const auto& w : text::words(t)) reserved.insert(w);
  }
  std::set<std::string> seen;
  SyntheticTask task;
  while (static_cast<int>(task.entities.size()) < cfg.kg_size) {
    const int syllables = 2 + static_cast<int>(uniform(2));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += consonants[uniform(consonants.size())];
      w += vowels[uniform(vowels.size())];
    }
    if (reserved.count(w) || !seen.insert(w).second) continue;
    task.entities.push_back(w);
  }

  const auto n = static_cast<std::size_t>(cfg.kg_size);
  std::vector<std::vector<int>> adj(n);
  const auto& rels = synthetic_relations();
  const auto target_edges = static_cast<std::size_t>(cfg.avg_degree * static_cast<double>(n) / 2.0);
  std::set<std::pair<int, int>> linked;
  while (linked.size() < target_edges) {
    const int a = static_cast<int>(uniform(n));
    const int b = static_cast<int>(uniform(n));
    if (a == b || linked.count({std::min(a, b), std::max(a, b)})) continue;
    linked.insert({std::min(a, b), std::max(a, b)});
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
    task.sources.triples.add(task.entities[static_cast<std::size_t>(a)], rels[uniform(rels.size())],
                             task.entities[static_cast<std::size_t>(b)]);
  }
  for (const auto& e : task.entities) task.sources.triples.add_entity(e);

  // Definitions mention up to two one-hop neighbours.
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> nb = adj[i];
    std::sort(nb.begin(), nb.end());
    std::string def = "a kind of thing";
    if (!nb.empty()) {
      std::shuffle(nb.begin(), nb.end(), rng);
      def += " found near " + task.entities[static_cast<std::size_t>(nb[0])];
      if (nb.size() > 1) def += " and " + task.entities[static_cast<std::size_t>(nb[1])];
    }
    task.sources.paraphrases.add(task.entities[i], def);
  }

  auto make = [&](int count, const std::string& prefix) {
    std::vector<QAInstance> out;
    while (static_cast<int>(out.size()) < count) {
      const auto q = static_cast<int>(uniform(n));
      if (adj[static_cast<std::size_t>(q)].empty()) continue;
      const auto dist = synthetic_distances(adj, q);
      std::vector<int> near, far;
      for (std::size_t v = 0; v < n; ++v) {
        if (dist[v] >= 1 && dist[v] <= cfg.max_gold_hops) near.push_back(static_cast<int>(v));
        if (dist[v] < 0 || dist[v] > cfg.max_gold_hops) far.push_back(static_cast<int>(v));
      }
      if (near.empty() || far.size() < static_cast<std::size_t>(cfg.choices - 1)) continue;
      std::vector<int> picks{near[uniform(near.size())]};
      std::shuffle(far.begin(), far.end(), rng);
      picks.insert(picks.end(), far.begin(), far.begin() + (cfg.choices - 1));
      const auto gold_slot = uniform(static_cast<std::size_t>(cfg.choices));
      std::swap(picks[0], picks[gold_slot]);

      QAInstance qa;
      qa.id = prefix + std::to_string(out.size());
      std::string tmpl = synthetic_templates()[uniform(synthetic_templates().size())];
      tmpl.replace(tmpl.find("{}"), 2, task.entities[static_cast<std::size_t>(q)]);
      qa.question = tmpl;
      for (int p : picks) qa.choices.push_back(task.entities[static_cast<std::size_t>(p)]);
      qa.answer_index = static_cast<int>(gold_slot);
      out.push_back(std::move(qa));
    }
    return out;
  };
  task.train = make(cfg.n_train, "train-");
  task.dev = make(cfg.n_dev, "dev-");
  task.test = make(cfg.n_test, "test-");
  return task;
}

}  // namespace gsap
