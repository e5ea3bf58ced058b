#pragma once

// End-to-end model: evidence graph -> graph encoder -> structure prompts ->
// frozen encoder -> HMPR, run once per choice with shared weights.

#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <tuple>
#include <utility>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsap/checkpoint.hpp"
#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/dataset.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/hmpr.hpp"
#include "gsap/knowledge_store.hpp"
#include "gsap/structure_prompt.hpp"
#include "gsap/tokenizer.hpp"
#include "gsap/transformer.hpp"

namespace gsap {

/// Switches for the ablation variants. All default to the full model.
struct Ablations {
  bool no_sapl = false;                // bag-of-embeddings text, no encoder, no prompts
  bool no_prompt = false;              // encoder runs without prompts
  bool random_prompt = false;          // untrained N(0, 1) prompts
  bool no_prompt_entity = false;       // drop head/tail prompt slots
  bool no_prompt_relation = false;     // drop relation prompt slots
  bool no_paraphrase_nodes = false;    // no DefTop nodes in the graph
  bool no_paraphrase_texts = false;    // no paraphrase segments in the text
  bool no_hmpr = false;                // mean-pooled text states + linear head
  bool no_bigru = false;               // identity fusion
  bool no_knowledge_attention = false; // gates fixed at 0.5
  bool no_relevance_score = false;     // no pruning, relevance block zeroed
  bool no_graph_attention = false;     // uniform neighbour weights
  bool use_conceptnet = true;          // triple-store paths
  bool use_wikipedia = true;           // corpus evidence sentences
  bool use_dictionary = true;          // paraphrases (nodes and texts)
  bool hmpr_own_gnn = false;           // separate weights for the g' re-encode

  /// Throws CONFLICTING_FLAGS for combinations that contradict each other.
  void validate() const {
    auto conflict = [](const char* a, const char* b) {
      throw Error(ErrorCode::kConflictingFlags, std::string(a) + " and " + b + " cannot be combined");
    };
    if (no_prompt && random_prompt) conflict("no_prompt", "random_prompt");
    if (no_sapl && random_prompt) conflict("no_sapl", "random_prompt");
    if (no_prompt_entity && no_prompt_relation) conflict("no_prompt_entity", "no_prompt_relation");
    if (no_hmpr && (no_bigru || no_knowledge_attention)) conflict("no_hmpr", "an HMPR sub-ablation");
  }

  bool prompts_enabled() const { return !no_sapl && !no_prompt; }
};

struct ModelConfig {
  TransformerConfig encoder{.hidden = 128, .layers = 4, .heads = 4, .ffn = 512};
  GraphEncoderConfig graph{};
  PromptConfig prompt{};
  HmprConfig hmpr{};
  GraphBuildConfig build{};
  double prune_threshold = 0.1;
  std::size_t evidence_top_k = 10;
  Ablations ablations{};
  std::uint64_t seed = 0;
};

/// Everything about one (question, choice) pair that does not depend on
/// trainable parameters.
struct PreparedChoice {
  EvidenceGraph graph;  // before scoring/pruning
  AssembledText text;
};

struct PreparedInstance {
  std::vector<PreparedChoice> choices;
};

struct ChoiceForward {
  ag::Var logit;  // 1 x 1, pre-ReLU
  EvidenceGraph graph;  // scored and pruned
  std::vector<QCTriplet> triplets;
  std::optional<KnowledgeGates> gates;
};

struct InstanceForward {
  ag::Var logits;  // 1 x b
  std::vector<ChoiceForward> choices;
};

class GsapModel {
 public:
  GsapModel(ModelConfig cfg, std::shared_ptr<const KnowledgeSources> sources, Vocab vocab)
      : cfg_(std::move(cfg)), sources_(std::move(sources)), vocab_(std::move(vocab)), store_(cfg_.seed),
        rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.ablations.validate();
    const auto& ab = cfg_.ablations;
    cfg_.graph.use_attention = !ab.no_graph_attention;
    cfg_.graph.use_relevance = !ab.no_relevance_score;
    cfg_.hmpr.use_bigru = !ab.no_bigru;
    cfg_.hmpr.use_knowledge_attention = !ab.no_knowledge_attention;
    cfg_.prompt.random = ab.random_prompt;
    cfg_.prompt.use_entity_slots = !ab.no_prompt_entity;
    cfg_.prompt.use_relation_slot = !ab.no_prompt_relation;
    cfg_.build.use_kg_paths = ab.use_conceptnet;
    cfg_.build.use_paraphrase_nodes = ab.use_dictionary && !ab.no_paraphrase_nodes;
    if (!ab.prompts_enabled()) cfg_.prompt.length = 0;

    relations_ = sources_->triples.relation_vocab();
    const auto h = cfg_.encoder.hidden;
    const auto d = cfg_.graph.hidden;
    encoder_ = FrozenEncoder(store_, "encoder", cfg_.encoder, vocab_.size());
    relevance_ = RelevanceScorer(store_, "relevance", h, nn::ParamGroup::kGraph);
    node_proj_ = nn::Linear(store_, "node_proj", h, d, nn::ParamGroup::kGraph);
    gnn_ = GraphEncoder(store_, "gnn", cfg_.graph, relations_);
    if (ab.hmpr_own_gnn) hmpr_gnn_ = GraphEncoder(store_, "hmpr_gnn", cfg_.graph, relations_);
    prompts_ = PromptGenerator(store_, "prompt", cfg_.prompt, encoder_.num_layers(), h, d, relations_.size());
    hmpr_ = Hmpr(store_, "hmpr", cfg_.hmpr, h, d);
    if (ab.no_hmpr) mean_head_ = nn::Linear(store_, "mean_head", h, 1, nn::ParamGroup::kGraph);
    snapshot_frozen();
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const Vocab& vocab() const { return vocab_; }
  const FrozenEncoder& encoder() const { return encoder_; }
  GraphEncoder& graph_encoder() { return gnn_; }
  const PromptGenerator& prompt_generator() const { return prompts_; }
  const Hmpr& hmpr() const { return hmpr_; }
  const KnowledgeSources& sources() const { return *sources_; }
  std::mt19937_64& rng() { return rng_; }

  bool training() const { return training_; }

  void set_training(bool training) {
    training_ = training;
    gnn_.set_training(training);
    hmpr_gnn_.set_training(training);
  }

  /// Frozen-encoder text embedding: mean of final states over the words.
  ag::RowVector phi(std::string_view s) {
    auto key = std::string(s);
    auto it = phi_cache_.find(key);
    if (it != phi_cache_.end()) return it->second;
    auto v = encoder_.pooled(vocab_.encode(s));
    phi_cache_.emplace(std::move(key), v);
    return v;
  }

  int max_text_tokens() const {
    const int k = cfg_.ablations.prompts_enabled() && prompts_.layers() > 0 ? cfg_.prompt.length : 0;
    return encoder_.config().max_len - k;
  }

  const PreparedInstance& prepare(const QAInstance& qa) {
    auto it = prepared_.find(qa.id);
    if (it != prepared_.end()) return it->second;
    PreparedInstance prep = prepare_uncached(qa);
    return prepared_.emplace(qa.id, std::move(prep)).first->second;
  }

  PreparedInstance prepare_uncached(const QAInstance& qa) const {
    validate(qa);
    const auto& ks = *sources_;
    const auto& ab = cfg_.ablations;
    const TopicEntities topics = extract_topic_entities(qa.question, qa.choices, ks.triples);
    static const ParaphraseDict kNoParaphrases;
    const ParaphraseDict& para = ab.use_dictionary ? ks.paraphrases : kNoParaphrases;
    std::vector<std::string> evidence;
    if (ab.use_wikipedia) evidence = retrieve_evidence(ks.corpus, qa.question, cfg_.evidence_top_k);

    auto definitions = [&](const std::vector<std::string>& ents) {
      std::vector<std::string> out;
      if (ab.no_paraphrase_texts) return out;
      for (const auto& e : ents) {
        if (auto d = para.lookup(e)) out.push_back(*d);
      }
      return out;
    };

    PreparedInstance prep;
    for (int c = 0; c < static_cast<int>(qa.choices.size()); ++c) {
      const auto choice_entities = topics.for_choice(c);
      PreparedChoice pc;
      pc.graph = build_graph(topics.question, choice_entities, ks.triples, para, cfg_.build, qa.question);
      pc.text = assemble_text(qa, c, {definitions(topics.question), definitions(choice_entities)}, evidence,
                              vocab_, max_text_tokens());
      prep.choices.push_back(std::move(pc));
    }
    return prep;
  }

  /// Pre-ReLU logits for every choice (1 x b).
  ag::Var forward(const QAInstance& qa) { return forward_detailed(qa).logits; }

  ChoiceScores predict(const QAInstance& qa) {
    return score_choices(forward(qa).value().row(0));
  }

  /// The b choice graphs of an instance go through the graph encoder
  /// together, so batch-norm statistics are shared across them.
  InstanceForward forward_detailed(const QAInstance& qa) {
    const auto& prep = prepare(qa);
    const auto& ab = cfg_.ablations;
    const std::size_t b = prep.choices.size();
    InstanceForward out;
    out.choices.resize(b);
    std::vector<ag::Var> features(b), lambdas(b);
    std::vector<const EvidenceGraph*> graphs(b);
    for (std::size_t c = 0; c < b; ++c) {
      auto& cf = out.choices[c];
      std::tie(cf.graph, lambdas[c]) = score_and_prune(prep.choices[c].graph);
      features[c] = node_features(cf.graph);
      graphs[c] = &cf.graph;
    }
    const auto genc = gnn_.encode_batch(graphs, features, lambdas);

    std::vector<SegmentEmbeddings> segs(b);
    std::vector<std::map<int, TripletOutput>> triplet_out(b);
    std::vector<ag::Var> logits(b);
    for (std::size_t c = 0; c < b; ++c) {
      auto& cf = out.choices[c];
      const auto& text = prep.choices[c].text;
      cf.triplets = select_qc_triplets(cf.graph);
      StructurePromptSet prompts;
      if (ab.prompts_enabled()) {
        std::vector<int> rel_ids;
        for (const auto& t : cf.triplets) rel_ids.push_back(gnn_.relation_index(t.relation));
        prompts = prompts_.generate(cf.triplets, cf.graph, genc[c].node_states, rel_ids, genc[c].graph_vector, &rng_);
      }
      if (ab.no_sapl) {
        segs[c] = bag_of_embeddings(text);
        if (ab.no_hmpr) logits[c] = mean_head_.forward(Hmpr::textual_summary(segs[c]));
        continue;
      }
      EncoderOutput enc = encode(encoder_, text, prompts);
      segs[c] = extract_segment_embeddings(enc);
      triplet_out[c] = extract_triplet_outputs(enc, prompts);
      if (ab.no_hmpr) {
        const auto k = enc.prompt_length;
        logits[c] = mean_head_.forward(ag::mean_rows(ag::slice_rows(enc.final_states, k, enc.final_states.rows() - k)));
      }
    }

    if (!ab.no_hmpr) {
      std::vector<ag::Var> refreshed(b);
      for (std::size_t c = 0; c < b; ++c) {
        refreshed[c] = hmpr_.refresh_features(out.choices[c].graph, out.choices[c].triplets, triplet_out[c], features[c]);
      }
      GraphEncoder& reencoder = ab.hmpr_own_gnn ? hmpr_gnn_ : gnn_;
      const auto gprime = reencoder.encode_batch(graphs, refreshed, lambdas);
      for (std::size_t c = 0; c < b; ++c) {
        FusionGroups groups = hmpr_.fuse(segs[c], Hmpr::textual_summary(segs[c]), gprime[c].graph_vector);
        KnowledgeGates gates = hmpr_.knowledge_attention(groups);
        logits[c] = hmpr_.logit(gates.fused);
        out.choices[c].gates = gates;
      }
    }
    for (std::size_t c = 0; c < b; ++c) out.choices[c].logit = logits[c];
    out.logits = ag::concat_cols(logits);
    return out;
  }

  /// Relevance column for the kept nodes, and the graph after pruning.
  std::pair<EvidenceGraph, ag::Var> score_and_prune(const EvidenceGraph& raw) {
    EvidenceGraph g = raw;
    const TextEmbedder embed = [this](std::string_view s) { return phi(s); };
    ag::Var lambda = relevance_.score(g, embed);
    if (cfg_.ablations.no_relevance_score) return {std::move(g), lambda};
    EvidenceGraph pruned = prune(g, cfg_.prune_threshold);
    if (pruned.size() != g.size()) {
      const auto index = g.id_to_index();
      std::vector<int> keep;
      for (const auto& n : pruned.nodes) keep.push_back(index.at(n.id));
      lambda = ag::gather_rows(lambda, keep);
    }
    return {std::move(pruned), lambda};
  }

  /// node_proj(phi(surface)) for every node, rows following g.nodes.
  ag::Var node_features(const EvidenceGraph& g) {
    ag::Matrix phis(static_cast<Eigen::Index>(g.size()), encoder_.hidden());
    for (std::size_t i = 0; i < g.size(); ++i) phis.row(static_cast<Eigen::Index>(i)) = phi(g.nodes[i].surface);
    return node_proj_.forward(ag::constant(std::move(phis)));
  }

  /// True iff every frozen tensor is bit-identical to its value at construction.
  bool freeze_check() const {
    std::size_t i = 0;
    for (const auto& p : store_.all()) {
      if (p.group != nn::ParamGroup::kFrozen) continue;
      if (i >= frozen_snapshot_.size()) return false;
      const auto& snap = frozen_snapshot_[i++];
      if (snap.rows() != p.var.rows() || snap.cols() != p.var.cols()) return false;
      if (std::memcmp(snap.data(), p.var.value().data(), sizeof(double) * static_cast<std::size_t>(snap.size())) != 0) {
        return false;
      }
    }
    return i == frozen_snapshot_.size();
  }

  void clear_caches() {
    phi_cache_.clear();
    prepared_.clear();
  }

  /// Overwrites the named tensors present in a checkpoint (a subset is fine,
  /// e.g. encoder weights only). Frozen values loaded here become the new
  /// freeze reference.
  void load_weights(const std::filesystem::path& path) {
    load_checkpoint(store_, path);
    snapshot_frozen();
    clear_caches();
  }

 private:
  void snapshot_frozen() {
    frozen_snapshot_.clear();
    for (const auto& p : store_.all()) {
      if (p.group == nn::ParamGroup::kFrozen) frozen_snapshot_.push_back(p.var.value());
    }
  }

  /// Segment means of raw token embeddings, used when the encoder is bypassed.
  SegmentEmbeddings bag_of_embeddings(const AssembledText& t) const {
    std::vector<int> q, c, e;
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      switch (t.segments[i]) {
        case Segment::kQuestion:
        case Segment::kQuestionParaphrase: q.push_back(t.ids[i]); break;
        case Segment::kChoice:
        case Segment::kChoiceParaphrase: c.push_back(t.ids[i]); break;
        case Segment::kEvidence: e.push_back(t.ids[i]); break;
        case Segment::kSpecial: break;
      }
    }
    auto pool = [&](std::vector<int> ids) {
      if (ids.empty()) return ag::constant(ag::Matrix::Zero(1, encoder_.hidden()));
      return ag::l2_normalize_rows(ag::mean_rows(ag::gather_rows(encoder_.token_table(), std::move(ids))));
    };
    return {pool(q), pool(c), pool(e)};
  }

  ModelConfig cfg_;
  std::shared_ptr<const KnowledgeSources> sources_;
  Vocab vocab_;
  nn::ParamStore store_;
  std::mt19937_64 rng_;
  std::vector<std::string> relations_;
  FrozenEncoder encoder_;
  RelevanceScorer relevance_;
  nn::Linear node_proj_;
  GraphEncoder gnn_;
  GraphEncoder hmpr_gnn_;
  PromptGenerator prompts_;
  Hmpr hmpr_;
  nn::Linear mean_head_;
  bool training_ = false;
  std::vector<ag::Matrix> frozen_snapshot_;
  std::unordered_map<std::string, ag::RowVector> phi_cache_;
  std::unordered_map<std::string, PreparedInstance> prepared_;
};

/// Vocabulary over every text the model can see.
inline Vocab build_vocab(const KnowledgeSources& ks, const std::vector<const std::vector<QAInstance>*>& datasets) {
  Vocab v;
  for (const auto* data : datasets) {
    if (!data) continue;
    for (const auto& qa : *data) {
      v.add_text(qa.question);
      for (const auto& c : qa.choices) v.add_text(c);
    }
  }
  for (const auto& e : ks.triples.entities()) v.add_text(e);
  for (const auto& [k, d] : ks.paraphrases.entries()) {
    v.add_text(k);
    v.add_text(d);
  }
  for (const auto& s : ks.corpus.sentences()) v.add_text(s.text);
  return v;
}

}  // namespace gsap
