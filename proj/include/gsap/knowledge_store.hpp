#pragma once

// File-backed knowledge sources: a triple store standing in for a
// ConceptNet-style graph, a paraphrase dictionary, and a sentence corpus.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gsap/core/error.hpp"
#include "gsap/core/text.hpp"

namespace gsap {

inline constexpr std::string_view kDefTop = "DefTop";
inline constexpr std::string_view kRelatedQA = "RelatedQA";

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;

  auto operator<=>(const Triple&) const = default;
};

/// One traversal step of a path. from/to follow the walk direction; the
/// triple keeps its stored orientation.
struct PathStep {
  std::string from;
  std::string relation;
  std::string to;
  std::size_t triple_id = 0;

  bool operator==(const PathStep&) const = default;
};

using TriplePath = std::vector<PathStep>;

inline std::string path_key(const TriplePath& path) {
  std::string key;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i == 0) key += path[i].from;
    key += '\x1f';
    key += path[i].relation;
    key += '\x1f';
    key += path[i].to;
  }
  return key;
}

class TripleStore {
 public:
  TripleStore() = default;

  /// Adds a triple after normalizing entity surfaces. Returns false when the
  /// triple is already present.
  bool add(std::string_view head, std::string_view relation, std::string_view tail) {
    Triple t{text::normalize_entity(head), std::string(text::trim(relation)), text::normalize_entity(tail)};
    if (t.head.empty() || t.tail.empty() || t.relation.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "triple has an empty field");
    }
    if (!seen_.insert(t).second) return false;
    const std::size_t id = triples_.size();
    entity_index_[t.head].push_back(id);
    if (t.tail != t.head) entity_index_[t.tail].push_back(id);
    note_entity(t.head);
    note_entity(t.tail);
    relations_.insert(t.relation);
    triples_.push_back(std::move(t));
    vocab_dirty_ = true;
    return true;
  }

  /// Registers a lexicon entity that has no incident triples.
  void add_entity(std::string_view surface) {
    auto e = text::normalize_entity(surface);
    if (e.empty()) return;
    entity_index_.try_emplace(e);
    note_entity(e);
  }

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }

  bool contains_entity(std::string_view e) const {
    return entity_index_.count(text::normalize_entity(e)) != 0;
  }

  const std::vector<std::size_t>& incident(std::string_view e) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = entity_index_.find(text::normalize_entity(e));
    return it == entity_index_.end() ? kEmpty : it->second;
  }

  std::size_t entity_count() const { return entity_index_.size(); }

  std::vector<std::string> entities() const {
    std::vector<std::string> out;
    out.reserve(entity_index_.size());
    for (const auto& [k, _] : entity_index_) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Reserved labels first, then every used relation in sorted order.
  const std::vector<std::string>& relation_vocab() const {
    if (vocab_dirty_) {
      vocab_.clear();
      vocab_.emplace_back(kDefTop);
      vocab_.emplace_back(kRelatedQA);
      for (const auto& r : relations_) {
        if (r != kDefTop && r != kRelatedQA) vocab_.push_back(r);
      }
      vocab_dirty_ = false;
    }
    return vocab_;
  }

  std::optional<int> relation_index(std::string_view label) const {
    const auto& v = relation_vocab();
    auto it = std::find(v.begin(), v.end(), label);
    if (it == v.end()) return std::nullopt;
    return static_cast<int>(it - v.begin());
  }

  /// Longest entity surface in words, for span matching.
  std::size_t max_entity_words() const { return max_words_; }

  /// Simple paths of 1..max_hops edges starting at each topic entity,
  /// ordered by path key and truncated to max_paths. Edges are traversed in
  /// both directions.
  std::vector<TriplePath> query_paths(const std::vector<std::string>& topics, std::size_t max_hops,
                                      std::size_t max_paths) const {
    if (max_hops < 1) throw Error(ErrorCode::kInvalidArgument, "query_paths: max_hops must be >= 1");
    std::vector<TriplePath> out;
    if (max_paths == 0) return out;
    std::set<std::string> starts;
    for (const auto& t : topics) starts.insert(text::normalize_entity(t));
    for (const auto& start : starts) {
      if (!entity_index_.count(start)) continue;
      TriplePath cur;
      std::vector<std::string> visited{start};
      extend(start, max_hops, cur, visited, out);
    }
    std::vector<std::pair<std::string, std::size_t>> keyed;
    keyed.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) keyed.emplace_back(path_key(out[i]), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<TriplePath> sorted;
    for (std::size_t i = 0; i < keyed.size() && sorted.size() < max_paths; ++i) {
      sorted.push_back(std::move(out[keyed[i].second]));
    }
    return sorted;
  }

 private:
  void note_entity(const std::string& e) {
    std::size_t words = 1 + static_cast<std::size_t>(std::count(e.begin(), e.end(), ' '));
    max_words_ = std::max(max_words_, words);
  }

  void extend(const std::string& at, std::size_t hops_left, TriplePath& cur, std::vector<std::string>& visited,
              std::vector<TriplePath>& out) const {
    if (hops_left == 0) return;
    for (std::size_t id : entity_index_.at(at)) {
      const Triple& t = triples_[id];
      if (t.head == t.tail) continue;
      const std::string& next = t.head == at ? t.tail : t.head;
      if (std::find(visited.begin(), visited.end(), next) != visited.end()) continue;
      cur.push_back({at, t.relation, next, id});
      out.push_back(cur);
      visited.push_back(next);
      extend(next, hops_left - 1, cur, visited, out);
      visited.pop_back();
      cur.pop_back();
    }
  }

  std::vector<Triple> triples_;
  std::set<Triple> seen_;
  std::unordered_map<std::string, std::vector<std::size_t>> entity_index_;
  std::set<std::string> relations_;
  mutable std::vector<std::string> vocab_;
  mutable bool vocab_dirty_ = true;
  std::size_t max_words_ = 0;
};

class ParaphraseDict {
 public:
  void add(std::string_view entity, std::string_view definition) {
    auto key = text::normalize_entity(entity);
    auto def = std::string(text::trim(definition));
    if (key.empty() || def.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "paraphrase entry needs a key and a definition");
    }
    entries_[key] = std::move(def);
  }

  std::optional<std::string> lookup(std::string_view entity) const {
    auto it = entries_.find(text::normalize_entity(entity));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct EvidenceSentence {
  std::string text;
  std::vector<std::string> tokens;  // sorted, unique, lowercased
};

class EvidenceCorpus {
 public:
  void add(std::string_view sentence) {
    auto trimmed = std::string(text::trim(sentence));
    if (trimmed.empty()) return;
    auto toks = text::words(trimmed);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    sentences_.push_back({std::move(trimmed), std::move(toks)});
  }

  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }
  const std::vector<EvidenceSentence>& sentences() const { return sentences_; }

  /// Number of distinct question tokens appearing in the sentence.
  static std::size_t overlap(const EvidenceSentence& s, const std::vector<std::string>& sorted_query) {
    std::size_t n = 0;
    auto a = s.tokens.begin();
    auto b = sorted_query.begin();
    while (a != s.tokens.end() && b != sorted_query.end()) {
      if (*a < *b) {
        ++a;
      } else if (*b < *a) {
        ++b;
      } else {
        ++n;
        ++a;
        ++b;
      }
    }
    return n;
  }

  /// Top-k sentences by token overlap with the question; ties keep corpus order.
  std::vector<std::string> retrieve(std::string_view question, std::size_t top_k) const {
    auto q = text::words(question);
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    std::vector<std::pair<std::size_t, std::size_t>> scored;  // (overlap, index)
    scored.reserve(sentences_.size());
    for (std::size_t i = 0; i < sentences_.size(); ++i) scored.emplace_back(overlap(sentences_[i], q), i);
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && out.size() < top_k; ++i) {
      out.push_back(sentences_[scored[i].second].text);
    }
    return out;
  }

 private:
  std::vector<EvidenceSentence> sentences_;
};

inline std::vector<std::string> retrieve_evidence(const EvidenceCorpus& corpus, std::string_view question,
                                                  std::size_t top_k) {
  return corpus.retrieve(question, top_k);
}

inline std::vector<TriplePath> query_paths(const TripleStore& store, const std::vector<std::string>& topics,
                                           std::size_t max_hops, std::size_t max_paths) {
  return store.query_paths(topics, max_hops, max_paths);
}

struct KnowledgeSources {
  TripleStore triples;
  ParaphraseDict paraphrases;
  EvidenceCorpus corpus;
};

namespace detail {

inline Error parse_error(const std::string& source, std::size_t line, const std::string& what) {
  return Error(ErrorCode::kParse, source + ":" + std::to_string(line) + ": " + what);
}

inline bool skip_line(std::string_view line) {
  auto t = text::trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace detail

/// `head<TAB>relation<TAB>tail` per line; `#` comments and blank lines ignored.
inline void read_triples(std::istream& in, const std::string& source, TripleStore& store) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = text::split(line, '\t');
    if (fields.size() != 3) {
      throw detail::parse_error(source, lineno, "expected 3 tab-separated fields, got " +
                                                    std::to_string(fields.size()));
    }
    if (text::trim(fields[0]).empty() || text::trim(fields[1]).empty() || text::trim(fields[2]).empty()) {
      throw detail::parse_error(source, lineno, "empty field");
    }
    store.add(fields[0], fields[1], fields[2]);
  }
}

/// `entity<TAB>definition` per line.
inline void read_paraphrases(std::istream& in, const std::string& source, ParaphraseDict& dict) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw detail::parse_error(source, lineno, "missing tab separator");
    auto key = text::trim(std::string_view(line).substr(0, tab));
    auto def = text::trim(std::string_view(line).substr(tab + 1));
    if (key.empty() || def.empty()) throw detail::parse_error(source, lineno, "empty entity or definition");
    dict.add(key, def);
  }
}

/// One sentence per line.
inline void read_corpus(std::istream& in, EvidenceCorpus& corpus) {
  std::string line;
  while (std::getline(in, line)) corpus.add(line);
}

namespace detail {

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + p.string());
  return in;
}

}  // namespace detail

/// Loads the three knowledge files. Empty paths load empty sources.
inline KnowledgeSources load_store(const std::filesystem::path& kg_path, const std::filesystem::path& para_path,
                                   const std::filesystem::path& corpus_path) {
  KnowledgeSources ks;
  if (!kg_path.empty()) {
    auto in = detail::open_or_throw(kg_path);
    read_triples(in, kg_path.string(), ks.triples);
  }
  if (!para_path.empty()) {
    auto in = detail::open_or_throw(para_path);
    read_paraphrases(in, para_path.string(), ks.paraphrases);
  }
  if (!corpus_path.empty()) {
    auto in = detail::open_or_throw(corpus_path);
    read_corpus(in, ks.corpus);
  }
  return ks;
}

inline void write_triples(std::ostream& out, const TripleStore& store) {
  for (const auto& t : store.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

inline void write_paraphrases(std::ostream& out, const ParaphraseDict& dict) {
  for (const auto& [k, v] : dict.entries()) out << k << '\t' << v << '\n';
}

}  // namespace gsap
