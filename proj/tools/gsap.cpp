// gsap: command-line front end for training, ablations, prompt-length sweeps,
// synthetic data generation and self-verification.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gsap/gsap.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::string dump_graph;
  std::string metrics_log;
  std::string init_checkpoint;
  std::string save_checkpoint;
  int prompt_length = -1;
  int prompt_layers = -2;
  int epochs = -1;
  std::vector<std::uint64_t> seeds;
  bool no_hmpr = false;
  bool no_bigru = false;
  bool no_knowledge_attention = false;
  bool hmpr_own_gnn = false;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Experiment config (JSON); defaults to the desk-scale synthetic task");
  app->add_option("--out", o.out, "Write the JSON report here as well as to stdout");
  app->add_option("--dump-graph", o.dump_graph, "Write per-instance evidence graphs (dev set) under DIR");
  app->add_option("--metrics-log", o.metrics_log, "Append per-epoch JSONL metrics here");
  app->add_option("--init-checkpoint", o.init_checkpoint, "Load these tensors (any subset) before training");
  app->add_option("--save-checkpoint", o.save_checkpoint, "Write the first seed's trained weights here");
  app->add_option("--prompt-length", o.prompt_length, "Prompt vectors per layer (k)");
  app->add_option("--prompt-layers", o.prompt_layers, "Prompting layers (p); -1 = all");
  app->add_option("--epochs", o.epochs, "Override training epochs");
  app->add_option("--seeds", o.seeds, "Seeds to average over")->delimiter(',');
  app->add_flag("--no-hmpr", o.no_hmpr, "Replace HMPR with mean-pool + linear head");
  app->add_flag("--no-bigru", o.no_bigru, "Identity fusion instead of the BiGRU");
  app->add_flag("--no-knowledge-attention", o.no_knowledge_attention, "Fix knowledge gates at 0.5");
  app->add_flag("--hmpr-own-gnn", o.hmpr_own_gnn, "Separate graph-encoder weights for the refreshed graph");
  app->add_flag("-q,--quiet", o.quiet, "No progress lines on stderr");
}

gsap::ExperimentConfig make_config(const CommonOptions& o) {
  gsap::ExperimentConfig cfg = o.config.empty() ? gsap::ExperimentConfig::desk_scale() : gsap::load_config(o.config);
  if (!o.dump_graph.empty()) cfg.dump_graph_dir = o.dump_graph;
  if (!o.metrics_log.empty()) cfg.metrics_log = o.metrics_log;
  if (!o.init_checkpoint.empty()) cfg.init_checkpoint = o.init_checkpoint;
  if (!o.save_checkpoint.empty()) cfg.save_checkpoint = o.save_checkpoint;
  if (o.prompt_length >= 0) cfg.model.prompt.length = o.prompt_length;
  if (o.prompt_layers >= -1) cfg.model.prompt.layers = o.prompt_layers;
  if (o.epochs >= 0) cfg.train.epochs = o.epochs;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  auto& a = cfg.model.ablations;
  a.no_hmpr = a.no_hmpr || o.no_hmpr;
  a.no_bigru = a.no_bigru || o.no_bigru;
  a.no_knowledge_attention = a.no_knowledge_attention || o.no_knowledge_attention;
  a.hmpr_own_gnn = a.hmpr_own_gnn || o.hmpr_own_gnn;
  a.validate();
  return cfg;
}

void emit(const nlohmann::json& j, const std::string& out) {
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw gsap::Error(gsap::ErrorCode::kIo, "cannot write " + out);
    f << j.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsap: graph-structured prompting for multiple-choice QA"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  add_common(run, run_opts);
  std::vector<std::string> run_flags;
  run->add_option("--flags", run_flags, "Ablation flags to apply")->delimiter(',');

  CommonOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "Run full model and each listed variant");
  add_common(ablate, ablate_opts);
  std::vector<std::string> variants;
  ablate->add_option("--flags", variants, "Variants, comma separated; join flags with '+'")
      ->delimiter(',')
      ->required();

  CommonOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Accuracy as a function of prompt length");
  add_common(sweep, sweep_opts);
  std::vector<int> lengths;
  sweep->add_option("--prompt-lengths", lengths, "Prompt lengths k")->delimiter(',')->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic task (datasets + knowledge files)");
  gsap::SyntheticConfig sc;
  std::string synth_out = "synthetic";
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--n", sc.n_train, "Training instances")->required();
  synth->add_option("--n-dev", sc.n_dev, "Dev instances");
  synth->add_option("--n-test", sc.n_test, "Test instances");
  synth->add_option("--choices", sc.choices, "Choices per question (b)");
  synth->add_option("--kg-size", sc.kg_size, "Entities in the knowledge graph");
  synth->add_option("--out", synth_out, "Output directory");

  auto* verify = app.add_subcommand("verify", "Run the oracle and gradient checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = make_config(run_opts);
      for (const auto& f : run_flags) gsap::set_flag(cfg.model.ablations, f);
      cfg.model.ablations.validate();
      std::ostream* progress = run_opts.quiet ? nullptr : &std::cerr;
      emit(gsap::run(cfg, progress).to_json(), run_opts.out);
    } else if (*ablate) {
      const auto cfg = make_config(ablate_opts);
      for (const auto& v : variants) (void)gsap::parse_variant(v);
      nlohmann::json reports = nlohmann::json::array();
      for (const auto& r : gsap::ablate(cfg, variants, ablate_opts.quiet ? nullptr : &std::cerr)) {
        reports.push_back(r.to_json());
      }
      emit(reports, ablate_opts.out);
    } else if (*sweep) {
      const auto cfg = make_config(sweep_opts);
      emit(gsap::sweep(cfg, lengths, sweep_opts.quiet ? nullptr : &std::cerr).to_json(), sweep_opts.out);
    } else if (*synth) {
      const auto task = gsap::generate_synthetic(sc);
      const std::filesystem::path dir(synth_out);
      std::filesystem::create_directories(dir);
      gsap::dump_dataset(dir / "train.jsonl", task.train);
      gsap::dump_dataset(dir / "dev.jsonl", task.dev);
      if (!task.test.empty()) gsap::dump_dataset(dir / "test.jsonl", task.test);
      std::ofstream kg(dir / "kg.tsv");
      gsap::write_triples(kg, task.sources.triples);
      std::ofstream para(dir / "paraphrases.tsv");
      gsap::write_paraphrases(para, task.sources.paraphrases);
      std::cout << "wrote " << task.train.size() << " train / " << task.dev.size() << " dev / " << task.test.size()
                << " test instances and " << task.sources.triples.size() << " triples to " << dir.string() << '\n';
    } else if (*verify) {
      bool ok = true;
      for (const auto& c : gsap::verify::run_all()) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.value << " (bound " << c.bound << ")";
        if (!c.detail.empty()) std::cout << " [" << c.detail << "]";
        std::cout << '\n';
        ok = ok && c.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const gsap::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
