#pragma once

// Structure-aware prompting of the frozen encoder: QA text assembly, prompt
// generation from question-to-choice triplets and the graph vector, layerwise
// prompt injection, and read-out of prompt and text segment states.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/core/text.hpp"
#include "gsap/dataset.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/knowledge_store.hpp"
#include "gsap/tokenizer.hpp"
#include "gsap/transformer.hpp"

namespace gsap {

// ---------------------------------------------------------------------------
// Text assembly

enum class Segment : int {
  kSpecial = 0,
  kQuestion,
  kQuestionParaphrase,
  kChoice,
  kChoiceParaphrase,
  kEvidence,
};

struct ParaphraseTexts {
  std::vector<std::string> question;  // definitions of question entities
  std::vector<std::string> choice;    // definitions of the choice's entities
};

struct AssembledText {
  std::vector<int> ids;
  std::vector<Segment> segments;  // one per id
};

/// "head relation tail" with underscores read as spaces.
inline std::string verbalize(const Triple& t) {
  return text::normalize_entity(t.head) + " " + text::normalize_entity(t.relation) + " " +
         text::normalize_entity(t.tail);
}

/// [CLS] question q-paraphrase [SEP] choice c-paraphrase [SEP] evidence,
/// trimmed to max_len. Tokens are dropped from the end of the evidence
/// first, then the choice paraphrase, question paraphrase, question and
/// choice; the three specials always remain.
inline AssembledText assemble_text(const QAInstance& qa, int choice_index, const ParaphraseTexts& para,
                                   const std::vector<std::string>& evidence, const Vocab& vocab,
                                   int max_len = kMaxSequenceLength) {
  if (choice_index < 0 || choice_index >= static_cast<int>(qa.choices.size())) {
    throw Error(ErrorCode::kInvalidArgument, "assemble_text: choice index out of range");
  }
  if (text::words(qa.question).empty()) throw Error(ErrorCode::kInvalidArgument, "assemble_text: empty question");
  if (max_len < 3) throw Error(ErrorCode::kSequenceOverflow, "assemble_text: max_len below 3");

  auto join_ids = [&](const std::vector<std::string>& parts) {
    std::vector<int> ids;
    for (const auto& p : parts) {
      auto e = vocab.encode(p);
      ids.insert(ids.end(), e.begin(), e.end());
    }
    return ids;
  };
  std::vector<int> q = vocab.encode(qa.question);
  std::vector<int> qd = join_ids(para.question);
  std::vector<int> c = vocab.encode(qa.choices[static_cast<std::size_t>(choice_index)]);
  std::vector<int> cd = join_ids(para.choice);
  std::vector<int> e = join_ids(evidence);

  std::size_t total = 3 + q.size() + qd.size() + c.size() + cd.size() + e.size();
  for (auto* seg : {&e, &cd, &qd, &q, &c}) {
    if (total <= static_cast<std::size_t>(max_len)) break;
    const std::size_t drop = std::min(seg->size(), total - static_cast<std::size_t>(max_len));
    seg->resize(seg->size() - drop);
    total -= drop;
  }

  AssembledText out;
  auto put = [&](const std::vector<int>& ids, Segment s) {
    for (int id : ids) {
      out.ids.push_back(id);
      out.segments.push_back(s);
    }
  };
  put({Vocab::kCls}, Segment::kSpecial);
  put(q, Segment::kQuestion);
  put(qd, Segment::kQuestionParaphrase);
  put({Vocab::kSep}, Segment::kSpecial);
  put(c, Segment::kChoice);
  put(cd, Segment::kChoiceParaphrase);
  put({Vocab::kSep}, Segment::kSpecial);
  put(e, Segment::kEvidence);
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

enum class PromptSlot : int { kHead = 0, kRelation = 1, kTail = 2 };

struct SlotAssignment {
  int layer = 0;     // 0-based prompting layer
  int position = 0;  // 0..k-1 within the layer prefix
  int triplet = -1;  // rank in the triplet list; -1 for a null prompt
  PromptSlot slot = PromptSlot::kHead;
};

struct PromptConfig {
  int length = 16;  // k, vectors per prompting layer
  int layers = -1;  // p; -1 means every encoder layer
  Eigen::Index mlp_hidden = 64;  // d_h
  bool use_entity_slots = true;
  bool use_relation_slot = true;
  bool random = false;  // fresh N(0, 1) prompts each forward, untrained
};

struct StructurePromptSet {
  int length = 0;  // k
  int layers = 0;  // p
  std::vector<ag::Var> per_layer;  // p entries, each k x H
  std::vector<SlotAssignment> slots;
  std::size_t triplet_count = 0;  // tp_count before truncation

  bool empty() const { return layers == 0 || length == 0; }
};

/// Prompt MLP F(e, g) = W_out ReLU(W_in (e + W_g g)) plus the
/// projection from graph node states into prompt space, the relation table
/// and the learned null prompts.
class PromptGenerator {
 public:
  PromptGenerator() = default;
  PromptGenerator(nn::ParamStore& store, const std::string& name, const PromptConfig& cfg, int encoder_layers,
                  Eigen::Index prompt_dim, Eigen::Index graph_dim, std::size_t relation_count,
                  nn::ParamGroup group = nn::ParamGroup::kLanguageSide)
      : cfg_(cfg), dim_(prompt_dim) {
    layers_ = cfg.layers < 0 ? encoder_layers : std::min(cfg.layers, encoder_layers);
    if (cfg.length < 0) throw Error(ErrorCode::kInvalidArgument, "prompt length must be >= 0");
    w_in_ = nn::Linear(store, name + ".W_in", prompt_dim, cfg.mlp_hidden, group, false);
    w_out_ = nn::Linear(store, name + ".W_out", cfg.mlp_hidden, prompt_dim, group, false);
    w_g_ = nn::Linear(store, name + ".W_g", graph_dim, prompt_dim, group, false);
    entity_proj_ = nn::Linear(store, name + ".W_entity", graph_dim, prompt_dim, group, false);
    relations_ = store.add_normal(name + ".relation_emb", static_cast<Eigen::Index>(relation_count), prompt_dim,
                                  1.0 / std::sqrt(static_cast<double>(prompt_dim)), group);
    const Eigen::Index nulls = std::max(1, layers_ * cfg.length);
    null_prompts_ = store.add_normal(name + ".null_prompts", nulls, prompt_dim, 0.02, group);
  }

  const PromptConfig& config() const { return cfg_; }
  int layers() const { return layers_; }
  int length() const { return cfg_.length; }
  const nn::Linear& w_in() const { return w_in_; }
  const nn::Linear& w_out() const { return w_out_; }
  const nn::Linear& w_g() const { return w_g_; }
  const nn::Linear& entity_projection() const { return entity_proj_; }
  const ag::Var& relation_table() const { return relations_; }
  const ag::Var& null_prompts() const { return null_prompts_; }

  /// F applied row-wise to e (m x d) with graph vector g (1 x D).
  ag::Var mlp(const ag::Var& e, const ag::Var& g) const {
    ag::Var shifted = ag::add_row(e, w_g_.forward(g));
    return w_out_.forward(ag::relu(w_in_.forward(shifted)));
  }

  std::vector<PromptSlot> enabled_slots() const {
    std::vector<PromptSlot> s;
    if (cfg_.use_entity_slots) s.push_back(PromptSlot::kHead);
    if (cfg_.use_relation_slot) s.push_back(PromptSlot::kRelation);
    if (cfg_.use_entity_slots) s.push_back(PromptSlot::kTail);
    return s;
  }

  /// Round-robin placement: triplet i goes to layer i mod p at block i / p;
  /// blocks beyond the per-layer capacity are dropped, free slots are null.
  std::vector<SlotAssignment> assign(std::size_t triplets) const {
    std::vector<SlotAssignment> out;
    const int k = cfg_.length;
    const int p = layers_;
    if (k == 0 || p == 0) return out;
    auto slots = enabled_slots();
    int width = static_cast<int>(slots.size());
    int capacity = width == 0 ? 0 : k / width;
    if (width > 0 && capacity == 0) {
      capacity = 1;
      width = k;
      slots.resize(static_cast<std::size_t>(k));
    }
    std::vector<std::vector<bool>> used(static_cast<std::size_t>(p), std::vector<bool>(static_cast<std::size_t>(k)));
    for (std::size_t i = 0; i < triplets; ++i) {
      const int layer = static_cast<int>(i % static_cast<std::size_t>(p));
      const int block = static_cast<int>(i / static_cast<std::size_t>(p));
      if (block >= capacity) break;
      for (int s = 0; s < width; ++s) {
        const int pos = block * width + s;
        out.push_back({layer, pos, static_cast<int>(i), slots[static_cast<std::size_t>(s)]});
        used[static_cast<std::size_t>(layer)][static_cast<std::size_t>(pos)] = true;
      }
    }
    for (int l = 0; l < p; ++l) {
      for (int pos = 0; pos < k; ++pos) {
        if (!used[static_cast<std::size_t>(l)][static_cast<std::size_t>(pos)]) {
          out.push_back({l, pos, -1, PromptSlot::kHead});
        }
      }
    }
    return out;
  }

  /// Builds the per-layer prompt matrices. node_states rows follow g.nodes;
  /// triplet endpoints are node ids of g.
  StructurePromptSet generate(const std::vector<QCTriplet>& triplets, const EvidenceGraph& g,
                              const ag::Var& node_states, const std::vector<int>& relation_ids,
                              const ag::Var& graph_vector, std::mt19937_64* rng = nullptr) const {
    StructurePromptSet set;
    set.length = cfg_.length;
    set.layers = layers_;
    set.triplet_count = triplets.size();
    if (set.empty()) {
      set.layers = 0;
      set.length = 0;
      return set;
    }
    set.slots = assign(triplets.size());
    const auto index = g.id_to_index();

    // Rows to push through F, one per occupied slot, in slot order.
    std::vector<int> entity_rows;
    std::vector<int> relation_rows;
    std::vector<int> source;  // for each occupied slot: index into [entities; relations]
    std::vector<std::size_t> occupied;
    for (std::size_t s = 0; s < set.slots.size(); ++s) {
      const auto& a = set.slots[s];
      if (a.triplet < 0) continue;
      const auto& t = triplets[static_cast<std::size_t>(a.triplet)];
      occupied.push_back(s);
      if (a.slot == PromptSlot::kRelation) {
        source.push_back(-1 - static_cast<int>(relation_rows.size()));
        relation_rows.push_back(relation_ids.at(static_cast<std::size_t>(a.triplet)));
      } else {
        source.push_back(static_cast<int>(entity_rows.size()));
        entity_rows.push_back(index.at(a.slot == PromptSlot::kHead ? t.head : t.tail));
      }
    }

    ag::Var f_out;
    if (!occupied.empty()) {
      if (cfg_.random) {
        f_out = random_rows(static_cast<Eigen::Index>(occupied.size()), *rng);
      } else {
        std::vector<ag::Var> parts;
        if (!entity_rows.empty()) parts.push_back(entity_proj_.forward(ag::gather_rows(node_states, entity_rows)));
        if (!relation_rows.empty()) parts.push_back(ag::gather_rows(relations_, relation_rows));
        ag::Var f = mlp(ag::concat_rows(parts), graph_vector);
        std::vector<int> order;
        const int n_ent = static_cast<int>(entity_rows.size());
        for (int src : source) order.push_back(src >= 0 ? src : n_ent + (-1 - src));
        f_out = ag::gather_rows(f, order);
      }
    }

    // Stack [F rows; null table] and gather each layer's k rows.
    const int n_occ = static_cast<int>(occupied.size());
    ag::Var nulls = cfg_.random ? random_rows(null_prompts_.rows(), *rng) : null_prompts_;
    ag::Var pool = n_occ > 0 ? ag::concat_rows({f_out, nulls}) : nulls;
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(layers_), std::vector<int>(static_cast<std::size_t>(cfg_.length)));
    int occ = 0;
    for (std::size_t s = 0; s < set.slots.size(); ++s) {
      const auto& a = set.slots[s];
      const int row = a.triplet >= 0 ? occ++ : n_occ + a.layer * cfg_.length + a.position;
      rows[static_cast<std::size_t>(a.layer)][static_cast<std::size_t>(a.position)] = row;
    }
    for (int l = 0; l < layers_; ++l) set.per_layer.push_back(ag::gather_rows(pool, rows[static_cast<std::size_t>(l)]));
    return set;
  }

 private:
  ag::Var random_rows(Eigen::Index n, std::mt19937_64& rng) const {
    std::normal_distribution<double> dist(0.0, 1.0);
    ag::Matrix m(n, dim_);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return ag::constant(std::move(m));
  }

  PromptConfig cfg_;
  Eigen::Index dim_ = 0;
  int layers_ = 0;
  nn::Linear w_in_, w_out_, w_g_, entity_proj_;
  ag::Var relations_;
  ag::Var null_prompts_;
};

// ---------------------------------------------------------------------------
// Prompted encoding

struct PositionRole {
  bool is_prompt = false;
  // prompt positions
  int layer = 0;
  int triplet = -1;
  PromptSlot slot = PromptSlot::kHead;
  // text positions
  Segment segment = Segment::kSpecial;
  int token = -1;
};

struct EncoderOutput {
  ag::Var final_states;                // (k + n) x H
  std::vector<ag::Var> layer_outputs;  // output of every layer, before any later overwrite
  std::vector<PositionRole> roles;     // prompt positions first
  int prompt_length = 0;
  int prompt_layers = 0;
};

/// Layer 1 input is [layer-1 prompts; text embeddings]. Before each later
/// prompting layer the first k positions are overwritten with that layer's
/// prompts; layers beyond p run unchanged.
inline EncoderOutput encode(const FrozenEncoder& enc, const AssembledText& text_in, const StructurePromptSet& prompts) {
  const int k = prompts.empty() ? 0 : prompts.length;
  const int p = prompts.empty() ? 0 : prompts.layers;
  const int n = static_cast<int>(text_in.ids.size());
  if (k + n > enc.config().max_len) {
    throw Error(ErrorCode::kSequenceOverflow, std::to_string(k) + " prompts + " + std::to_string(n) +
                                                  " tokens exceed " + std::to_string(enc.config().max_len));
  }
  if (p > enc.num_layers()) throw Error(ErrorCode::kInvalidArgument, "more prompting layers than encoder layers");

  EncoderOutput out;
  out.prompt_length = k;
  out.prompt_layers = p;
  for (int pos = 0; pos < k; ++pos) out.roles.push_back({true, 0, -1, PromptSlot::kHead, Segment::kSpecial, -1});
  for (const auto& a : prompts.slots) {
    if (a.layer == 0) {
      auto& r = out.roles[static_cast<std::size_t>(a.position)];
      r.triplet = a.triplet;
      r.slot = a.slot;
    }
  }
  for (int i = 0; i < n; ++i) {
    out.roles.push_back({false, 0, -1, PromptSlot::kHead, text_in.segments[static_cast<std::size_t>(i)], i});
  }

  ag::Var x = enc.embed(text_in.ids);
  if (p > 0) x = ag::concat_rows({prompts.per_layer[0], x});
  for (int l = 0; l < enc.num_layers(); ++l) {
    if (l > 0 && l < p) x = ag::concat_rows({prompts.per_layer[static_cast<std::size_t>(l)], ag::slice_rows(x, k, n)});
    x = enc.layer(x, l);
    out.layer_outputs.push_back(x);
  }
  out.final_states = x;
  return out;
}

struct TripletOutput {
  std::optional<ag::Var> head;
  std::optional<ag::Var> relation;
  std::optional<ag::Var> tail;
};

/// Output states at each triplet's prompt slots. Triplets injected at layer
/// j < p are read from layer j's output (before the next overwrite); those
/// at the last prompting layer are read from the final states.
inline std::map<int, TripletOutput> extract_triplet_outputs(const EncoderOutput& out,
                                                            const StructurePromptSet& prompts) {
  std::map<int, TripletOutput> result;
  if (prompts.empty()) return result;
  for (const auto& a : prompts.slots) {
    if (a.triplet < 0) continue;
    const ag::Var& src = a.layer < prompts.layers - 1 ? out.layer_outputs[static_cast<std::size_t>(a.layer)]
                                                      : out.final_states;
    ag::Var row = ag::slice_rows(src, a.position, 1);
    auto& t = result[a.triplet];
    switch (a.slot) {
      case PromptSlot::kHead: t.head = row; break;
      case PromptSlot::kRelation: t.relation = row; break;
      case PromptSlot::kTail: t.tail = row; break;
    }
  }
  return result;
}

struct SegmentEmbeddings {
  ag::Var question;  // 1 x H, L2-normalized mean over question + its paraphrase
  ag::Var choice;
  ag::Var evidence;  // zero when the evidence segment is empty
};

inline SegmentEmbeddings extract_segment_embeddings(const EncoderOutput& out) {
  std::vector<int> q;
  std::vector<int> c;
  std::vector<int> e;
  for (std::size_t i = 0; i < out.roles.size(); ++i) {
    const auto& r = out.roles[i];
    if (r.is_prompt) continue;
    switch (r.segment) {
      case Segment::kQuestion:
      case Segment::kQuestionParaphrase: q.push_back(static_cast<int>(i)); break;
      case Segment::kChoice:
      case Segment::kChoiceParaphrase: c.push_back(static_cast<int>(i)); break;
      case Segment::kEvidence: e.push_back(static_cast<int>(i)); break;
      case Segment::kSpecial: break;
    }
  }
  const auto h = out.final_states.cols();
  auto pool = [&](const std::vector<int>& rows) {
    if (rows.empty()) return ag::constant(ag::Matrix::Zero(1, h));
    return ag::l2_normalize_rows(ag::mean_rows(ag::gather_rows(out.final_states, rows)));
  };
  return {pool(q), pool(c), pool(e)};
}

}  // namespace gsap
