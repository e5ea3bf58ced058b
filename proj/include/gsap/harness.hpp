#pragma once

// Experiment runner: config parsing, data/knowledge loading (or synthesis),
// train + evaluate per variant and seed, JSON reports.

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsap/core/error.hpp"
#include "gsap/core/text.hpp"
#include "gsap/dataset.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/knowledge_store.hpp"
#include "gsap/model.hpp"
#include "gsap/synthetic.hpp"
#include "gsap/trainer.hpp"

namespace gsap {

// ---------------------------------------------------------------------------
// Ablation flags by name

struct FlagSpec {
  const char* name;
  bool Ablations::*member;
};

inline const std::vector<FlagSpec>& ablation_flags() {
  static const std::vector<FlagSpec> flags{
      {"no_sapl", &Ablations::no_sapl},
      {"no_prompt", &Ablations::no_prompt},
      {"random_prompt", &Ablations::random_prompt},
      {"no_prompt_entity", &Ablations::no_prompt_entity},
      {"no_prompt_relation", &Ablations::no_prompt_relation},
      {"no_paraphrase_nodes", &Ablations::no_paraphrase_nodes},
      {"no_paraphrase_texts", &Ablations::no_paraphrase_texts},
      {"no_hmpr", &Ablations::no_hmpr},
      {"no_bigru", &Ablations::no_bigru},
      {"no_knowledge_attention", &Ablations::no_knowledge_attention},
      {"no_relevance_score", &Ablations::no_relevance_score},
      {"no_graph_attention", &Ablations::no_graph_attention},
      {"hmpr_own_gnn", &Ablations::hmpr_own_gnn},
  };
  return flags;
}

inline void set_flag(Ablations& a, std::string_view name) {
  for (const auto& f : ablation_flags()) {
    if (name == f.name) {
      a.*(f.member) = true;
      return;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown ablation flag: " + std::string(name));
}

/// Restricts knowledge sources to the listed subset of
/// {conceptnet, wikipedia, dictionary}.
inline void set_kg_sources(Ablations& a, const std::vector<std::string>& sources) {
  a.use_conceptnet = a.use_wikipedia = a.use_dictionary = false;
  for (const auto& s : sources) {
    if (s == "conceptnet") {
      a.use_conceptnet = true;
    } else if (s == "wikipedia") {
      a.use_wikipedia = true;
    } else if (s == "dictionary") {
      a.use_dictionary = true;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown knowledge source: " + s);
    }
  }
}

inline nlohmann::json ablations_to_json(const Ablations& a) {
  nlohmann::json j;
  for (const auto& f : ablation_flags()) j[f.name] = a.*(f.member);
  std::vector<std::string> srcs;
  if (a.use_conceptnet) srcs.push_back("conceptnet");
  if (a.use_wikipedia) srcs.push_back("wikipedia");
  if (a.use_dictionary) srcs.push_back("dictionary");
  j["kg_sources"] = srcs;
  return j;
}

inline Ablations ablations_from_json(const nlohmann::json& j) {
  Ablations a;
  for (const auto& f : ablation_flags()) {
    if (j.contains(f.name)) a.*(f.member) = j.at(f.name).get<bool>();
  }
  if (j.contains("kg_sources")) set_kg_sources(a, j.at("kg_sources").get<std::vector<std::string>>());
  return a;
}

/// "full" or '+'-joined flag names, e.g. "no_prompt+no_bigru".
inline Ablations parse_variant(std::string_view variant) {
  Ablations a;
  if (variant == "full") return a;
  for (const auto& part : text::split(variant, '+')) {
    const auto name = std::string(text::trim(part));
    if (!name.empty()) set_flag(a, name);
  }
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string name = "experiment";
  std::string train_path, dev_path, test_path;
  std::string kg_path, paraphrase_path, corpus_path;
  std::optional<SyntheticConfig> synthetic;  // used when no train path is given
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::vector<int> prompt_lengths{2, 4, 8, 16, 32};
  std::vector<std::string> variants{"full"};
  std::string dump_graph_dir;
  std::string metrics_log;
  std::string init_checkpoint;  // loaded into every model before training
  std::string save_checkpoint;  // trained weights of the first seed

  /// Small dimensions that train in minutes on one CPU core.
  static ExperimentConfig desk_scale() {
    ExperimentConfig c;
    c.model.encoder = {.hidden = 32, .layers = 2, .heads = 2, .ffn = 64, .max_len = kMaxSequenceLength};
    c.model.graph.hidden = 32;
    c.model.graph.layers = 3;
    c.model.graph.node_type_dim = 8;
    c.model.graph.rel_type_dim = 8;
    c.model.graph.relevance_dim = 8;
    c.model.prompt.length = 6;
    c.model.prompt.mlp_hidden = 32;
    c.model.hmpr.fusion_dim = 16;
    c.train.lr_lm_side = 1e-3;
    c.train.lr_graph = 1e-3;
    c.train.warmup_steps = 50;
    c.synthetic = SyntheticConfig{};
    return c;
  }
};

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

/// Missing keys keep the desk-scale defaults. Relative paths resolve against
/// `base` (normally the config file's directory).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  ExperimentConfig c = ExperimentConfig::desk_scale();
  auto get = [&](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) field = obj.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get(j, "name", c.name);
  for (auto [key, field] : {std::pair{"train", &c.train_path}, std::pair{"dev", &c.dev_path},
                            std::pair{"test", &c.test_path}, std::pair{"kg", &c.kg_path},
                            std::pair{"paraphrases", &c.paraphrase_path}, std::pair{"corpus", &c.corpus_path},
                            std::pair{"dump_graph", &c.dump_graph_dir}, std::pair{"metrics_log", &c.metrics_log},
                            std::pair{"init_checkpoint", &c.init_checkpoint},
                            std::pair{"save_checkpoint", &c.save_checkpoint}}) {
    if (j.contains(key)) *field = resolve(base, j.at(key).get<std::string>());
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    SyntheticConfig sc;
    get(s, "seed", sc.seed);
    get(s, "n_train", sc.n_train);
    get(s, "n_dev", sc.n_dev);
    get(s, "n_test", sc.n_test);
    get(s, "choices", sc.choices);
    get(s, "kg_size", sc.kg_size);
    get(s, "avg_degree", sc.avg_degree);
    c.synthetic = sc;
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("encoder")) {
      const auto& e = m.at("encoder");
      get(e, "hidden", c.model.encoder.hidden);
      get(e, "layers", c.model.encoder.layers);
      get(e, "heads", c.model.encoder.heads);
      get(e, "ffn", c.model.encoder.ffn);
    }
    if (m.contains("graph")) {
      const auto& g = m.at("graph");
      get(g, "hidden", c.model.graph.hidden);
      get(g, "layers", c.model.graph.layers);
      get(g, "node_type_dim", c.model.graph.node_type_dim);
      get(g, "rel_type_dim", c.model.graph.rel_type_dim);
      get(g, "relevance_dim", c.model.graph.relevance_dim);
    }
    if (m.contains("prompt")) {
      const auto& p = m.at("prompt");
      get(p, "length", c.model.prompt.length);
      get(p, "layers", c.model.prompt.layers);
      get(p, "mlp_hidden", c.model.prompt.mlp_hidden);
    }
    if (m.contains("hmpr")) get(m.at("hmpr"), "fusion_dim", c.model.hmpr.fusion_dim);
    get(m, "max_hops", c.model.build.max_hops);
    get(m, "max_paths", c.model.build.max_paths);
    get(m, "prune_threshold", c.model.prune_threshold);
    get(m, "evidence_top_k", c.model.evidence_top_k);
  }
  if (j.contains("train_config")) {
    const auto& t = j.at("train_config");
    get(t, "lr_lm_side", c.train.lr_lm_side);
    get(t, "lr_graph", c.train.lr_graph);
    get(t, "epochs", c.train.epochs);
    get(t, "warmup_steps", c.train.warmup_steps);
    get(t, "grad_accum", c.train.grad_accum);
    get(t, "batch_size", c.train.batch_size);
    get(t, "weight_decay", c.train.weight_decay);
    get(t, "clip_norm", c.train.clip_norm);
    get(t, "max_steps", c.train.max_steps);
  }
  if (j.contains("ablations")) c.model.ablations = ablations_from_json(j.at("ablations"));
  get(j, "seeds", c.seeds);
  get(j, "prompt_lengths", c.prompt_lengths);
  get(j, "variants", c.variants);
  if (c.seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "config needs at least one seed");
  c.model.ablations.validate();
  c.train.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Data

struct ExperimentData {
  std::vector<QAInstance> train, dev, test;
  std::shared_ptr<const KnowledgeSources> sources;
  Vocab vocab;
};

inline ExperimentData load_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  if (!cfg.train_path.empty()) {
    d.train = load_dataset(cfg.train_path);
    if (!cfg.dev_path.empty()) d.dev = load_dataset(cfg.dev_path);
    if (!cfg.test_path.empty()) d.test = load_dataset(cfg.test_path);
    d.sources = std::make_shared<KnowledgeSources>(load_store(cfg.kg_path, cfg.paraphrase_path, cfg.corpus_path));
  } else if (cfg.synthetic) {
    auto task = generate_synthetic(*cfg.synthetic);
    d.train = std::move(task.train);
    d.dev = std::move(task.dev);
    d.test = std::move(task.test);
    d.sources = std::make_shared<KnowledgeSources>(std::move(task.sources));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "config needs a train path or a synthetic section");
  }
  d.vocab = build_vocab(*d.sources, {&d.train, &d.dev, &d.test});
  return d;
}

// ---------------------------------------------------------------------------
// Reports

struct SeedResult {
  std::uint64_t seed = 0;
  double dev_acc = 0.0;
  std::optional<double> test_acc;
  long steps = 0;
};

struct Report {
  std::string variant;
  double dev_acc = 0.0;  // mean over seeds
  std::optional<double> test_acc;
  long steps = 0;
  double wall_time_s = 0.0;
  std::vector<SeedResult> seeds;

  nlohmann::json to_json() const {
    nlohmann::json j{{"variant", variant}, {"dev_acc", dev_acc}, {"steps", steps}, {"wall_time_s", wall_time_s}};
    j["test_acc"] = test_acc ? nlohmann::json(*test_acc) : nlohmann::json(nullptr);
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : seeds) {
      per.push_back({{"seed", s.seed},
                     {"dev_acc", s.dev_acc},
                     {"test_acc", s.test_acc ? nlohmann::json(*s.test_acc) : nlohmann::json(nullptr)},
                     {"steps", s.steps}});
    }
    j["per_seed"] = per;
    return j;
  }
};

inline void dump_graphs(GsapModel& model, const std::vector<QAInstance>& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  model.set_training(false);
  for (const auto& qa : data) {
    nlohmann::json j{{"id", qa.id}, {"question", qa.question}};
    try {
      const auto fwd = model.forward_detailed(qa);
      nlohmann::json choices = nlohmann::json::array();
      for (std::size_t c = 0; c < fwd.choices.size(); ++c) {
        choices.push_back({{"choice", qa.choices[c]}, {"logit", fwd.choices[c].logit.item()},
                           {"graph", graph_to_json(fwd.choices[c].graph)}});
      }
      j["choices"] = choices;
    } catch (const Error& e) {
      j["error"] = e.what();
    }
    std::ofstream out(dir / (qa.id + ".json"));
    out << j.dump(2) << '\n';
  }
}

/// Train and evaluate one ablation setting for every configured seed.
inline Report run_variant(const ExperimentConfig& cfg, const ExperimentData& data, const std::string& variant,
                          const Ablations& ablations, std::ostream* progress = nullptr) {
  ablations.validate();
  if (data.dev.empty()) throw Error(ErrorCode::kEmptyDataset, "run needs a dev set");
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.variant = variant;
  double test_sum = 0.0;
  for (auto seed : cfg.seeds) {
    ModelConfig mc = cfg.model;
    mc.ablations = ablations;
    mc.seed = seed;
    GsapModel model(mc, data.sources, data.vocab);
    if (!cfg.init_checkpoint.empty()) model.load_weights(cfg.init_checkpoint);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    std::ofstream metrics;
    if (!cfg.metrics_log.empty()) {
      metrics.open(cfg.metrics_log, std::ios::app);
      metrics << nlohmann::json{{"variant", variant}, {"seed", seed}}.dump() << '\n';
    }
    TrainResult tr;
    try {
      tr = train(model, data.train, tc, &data.dev, metrics.is_open() ? &metrics : nullptr);
    } catch (const Error& e) {
      throw Error(e.code(), "variant " + variant + ", seed " + std::to_string(seed) + ": " + e.what());
    }
    SeedResult sr;
    sr.seed = seed;
    sr.steps = tr.steps;
    sr.dev_acc = evaluate(model, data.dev).accuracy;
    if (!data.test.empty()) sr.test_acc = evaluate(model, data.test).accuracy;
    if (progress) {
      *progress << "[" << variant << "] seed " << seed << " dev_acc " << sr.dev_acc << " steps " << sr.steps << '\n';
    }
    rep.dev_acc += sr.dev_acc;
    if (sr.test_acc) test_sum += *sr.test_acc;
    rep.steps += sr.steps;
    rep.seeds.push_back(sr);
    if (!cfg.save_checkpoint.empty() && seed == cfg.seeds.front()) {
      save_checkpoint(model.params(), cfg.save_checkpoint);
    }
    if (!cfg.dump_graph_dir.empty() && seed == cfg.seeds.front()) {
      dump_graphs(model, data.dev, std::filesystem::path(cfg.dump_graph_dir) / variant);
    }
  }
  const double n = static_cast<double>(cfg.seeds.size());
  rep.dev_acc /= n;
  if (!data.test.empty()) rep.test_acc = test_sum / n;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline Report run(const ExperimentConfig& cfg, std::ostream* progress = nullptr) {
  const auto data = load_data(cfg);
  return run_variant(cfg, data, "full", cfg.model.ablations, progress);
}

/// "full" first, then every requested variant.
inline std::vector<Report> ablate(const ExperimentConfig& cfg, const std::vector<std::string>& variants,
                                  std::ostream* progress = nullptr) {
  std::vector<std::pair<std::string, Ablations>> todo{{"full", cfg.model.ablations}};
  for (const auto& v : variants) {
    if (v == "full") continue;
    todo.emplace_back(v, parse_variant(v));
  }
  const auto data = load_data(cfg);
  std::vector<Report> out;
  for (const auto& [name, ab] : todo) out.push_back(run_variant(cfg, data, name, ab, progress));
  return out;
}

struct SweepReport {
  std::vector<int> lengths;
  std::vector<Report> reports;
  std::string shape;

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      auto r = reports[i].to_json();
      r["prompt_length"] = lengths[i];
      pts.push_back(r);
    }
    return {{"sweep", "prompt_length"}, {"points", pts}, {"shape", shape}};
  }
};

/// Classifies an accuracy curve: "monotone-increasing", "rise-then-flat",
/// "rise-then-decline", "flat" or "irregular". Differences within `tol`
/// count as flat.
inline std::string curve_shape(const std::vector<double>& acc, double tol = 0.01) {
  if (acc.size() < 2) return "flat";
  std::size_t peak = 0;
  for (std::size_t i = 1; i < acc.size(); ++i) {
    if (acc[i] > acc[peak] + tol) peak = i;
  }
  bool rising = true;
  for (std::size_t i = 1; i <= peak; ++i) {
    if (acc[i] < acc[i - 1] - tol) rising = false;
  }
  if (!rising) return "irregular";
  const double lo = *std::min_element(acc.begin(), acc.end());
  const double hi = *std::max_element(acc.begin(), acc.end());
  if (hi - lo <= tol) return "flat";
  if (peak + 1 == acc.size()) return "monotone-increasing";
  bool flat_after = true;
  for (std::size_t i = peak + 1; i < acc.size(); ++i) {
    if (acc[i] < acc[peak] - tol) flat_after = false;
  }
  return flat_after ? "rise-then-flat" : "rise-then-decline";
}

inline SweepReport sweep(const ExperimentConfig& cfg, const std::vector<int>& lengths, std::ostream* progress = nullptr) {
  if (lengths.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one prompt length");
  const auto data = load_data(cfg);
  SweepReport out;
  std::vector<double> acc;
  for (int k : lengths) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "prompt lengths must be >= 1");
    ExperimentConfig c = cfg;
    c.model.prompt.length = k;
    out.lengths.push_back(k);
    out.reports.push_back(run_variant(c, data, "k=" + std::to_string(k), cfg.model.ablations, progress));
    acc.push_back(out.reports.back().dev_acc);
  }
  out.shape = curve_shape(acc);
  return out;
}

}  // namespace gsap
