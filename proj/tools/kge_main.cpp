// SPDX-License-Identifier: Apache-2.0
//
// kge: train, evaluate and analyze contrastive knowledge-graph embeddings.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kge/evaluator.hpp"
#include "kge/graph_index.hpp"
#include "kge/kg.hpp"
#include "kge/model.hpp"
#include "kge/negsampler.hpp"
#include "kge/parallel.hpp"
#include "kge/synthetic.hpp"
#include "kge/trainer.hpp"

namespace fs = std::filesystem;
using namespace kge;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMissingInput = 2;

struct MissingInput : Error {
  using Error::Error;
};

/// String-valued flags for every TrainConfig key; unset flags keep the
/// value from --config (or the default).
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app, bool with_dataset = true) {
    app->add_option("--config", config_file, "key=value config file; flags override it");
    struct Flag {
      const char* key;
      const char* help;
    };
    const Flag flags[] = {
        {"loss_mode", "simple | hard | hasa | hasa_plus"},
        {"batch_size", "triples per batch"},
        {"epochs", "training epochs"},
        {"lr", "learning rate"},
        {"weight_decay", "decoupled weight decay per step"},
        {"dim", "embedding dimension"},
        {"tau", "prior probability of a false hard negative"},
        {"M", "structure samples per triple"},
        {"seed", "random seed"},
        {"aggregator", "gru | sum | mlp"},
        {"eval_every", "validate every N steps (0 = every epoch)"},
        {"checkpoint", "final checkpoint path"},
        {"log", "JSON-lines training log"},
        {"init_scale", "uniform init range"},
        {"debias_variant", "eq7 | alg1"},
        {"floor_epsilon", "NegHasa clamp factor"},
        {"hard_k", "hard negatives per triple"},
        {"hard_selection", "topk | softmax"},
        {"adam_beta1", "Adam first-moment decay"},
        {"adam_beta2", "Adam second-moment decay"},
        {"adam_eps", "Adam denominator epsilon"},
        {"workers", "worker threads (default: KGE_WORKERS or 1)"},
        {"filtered", "filtered ranking (true/false)"},
        {"valid_max_candidates", "candidate cap for validation (auto or N)"},
        {"neighborhood_cache", "cached two-hop neighborhoods"},
    };
    for (const auto& f : flags) add(app, f.key, f.help);
    if (with_dataset) {
      add(app, "train", "training triples (TSV)");
      add(app, "valid", "validation triples (TSV)");
      add(app, "test", "test triples (TSV)");
    }
  }

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    options[key] = app->add_option(flag, values[key], help);
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (const char* env = std::getenv("KGE_WORKERS")) apply_config_entry(cfg, "workers", env);
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw MissingInput("config file not found: " + config_file);
      for (const auto& [k, v] : read_key_value_file(config_file)) apply_config_entry(cfg, k, v);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_config_entry(cfg, key, values.at(key));
    cfg.validate();
    return cfg;
  }
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw MissingInput(std::string("no ") + what + " path given");
  if (!fs::exists(path)) throw MissingInput(std::string(what) + " file not found: " + path);
}

KnowledgeGraph load_augmented(const TrainConfig& cfg, bool reverse) {
  require_file(cfg.train_path, "train");
  require_file(cfg.valid_path, "valid");
  require_file(cfg.test_path, "test");
  auto kg = load_dataset(cfg.train_path, cfg.valid_path, cfg.test_path);
  return reverse ? augment_reverse(kg) : kg;
}

void check_model_matches(const EmbeddingModel& model, const KnowledgeGraph& kg, std::optional<std::size_t> dim) {
  if (dim && model.dim() != *dim)
    throw Error("checkpoint dim mismatch: expected " + std::to_string(*dim) + ", found " + std::to_string(model.dim()));
  if (model.entity_count() != kg.entity_count() || model.relation_count() != kg.relation_count())
    throw Error("checkpoint does not match the dataset: expected " + std::to_string(kg.entity_count()) +
                " entities and " + std::to_string(kg.relation_count()) + " relations, found " +
                std::to_string(model.entity_count()) + " and " + std::to_string(model.relation_count()));
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoul(item));
  if (out.empty()) throw Error("empty list: '" + s + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  if (out.empty()) throw Error("empty list: '" + s + "'");
  return out;
}

void add_synthetic_options(CLI::App* app, SyntheticKGSpec& spec) {
  app->add_option("--blocks", spec.block_count, "number of blocks");
  app->add_option("--per-block", spec.entities_per_block, "entities per block");
  app->add_option("--relations", spec.relations, "number of relations");
  app->add_option("--p-intra", spec.intra_block_edge_probability, "edge probability on planted block pairs");
  app->add_option("--p-inter", spec.inter_block_edge_probability, "edge probability elsewhere");
  app->add_option("--missing", spec.missing_fraction, "held-out share of the facts (valid + test)");
  app->add_option("--synthetic-seed", spec.seed, "generator seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive knowledge-graph embedding toolkit"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_metrics;
  bool train_no_reverse = false;
  train_cmd->add_option("--metrics", train_metrics, "test metrics JSON (default: <checkpoint>.metrics.json)");
  train_cmd->add_flag("--no-reverse", train_no_reverse, "do not add reverse relations");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "rank held-out triples with a checkpoint");
  std::string eval_ckpt, eval_train, eval_valid, eval_test, eval_split = "test", eval_out, eval_ranks;
  std::size_t eval_dim = 0, eval_max_candidates = 0;
  std::uint64_t eval_seed = 0;
  bool eval_raw = false, eval_no_reverse = false;
  int eval_workers = default_workers();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--train", eval_train, "training triples")->required();
  eval_cmd->add_option("--valid", eval_valid, "validation triples")->required();
  eval_cmd->add_option("--test", eval_test, "test triples")->required();
  eval_cmd->add_option("--split", eval_split, "valid | test");
  eval_cmd->add_option("--dim", eval_dim, "expected embedding dimension");
  eval_cmd->add_option("--max-candidates", eval_max_candidates, "shared candidate subsample (0 = all)");
  eval_cmd->add_option("--seed", eval_seed, "seed for the candidate subsample");
  eval_cmd->add_option("--workers", eval_workers, "worker threads");
  eval_cmd->add_option("--out", eval_out, "metrics JSON");
  eval_cmd->add_option("--ranks", eval_ranks, "per-triple ranks CSV");
  eval_cmd->add_flag("--raw", eval_raw, "unfiltered ranking");
  eval_cmd->add_flag("--no-reverse", eval_no_reverse, "dataset was trained without reverse relations");

  // analyze-negatives
  auto* fn_cmd = app.add_subcommand("analyze-negatives", "false-negative counts and distance histograms");
  ConfigFlags fn_flags;
  fn_flags.attach(fn_cmd);
  SyntheticKGSpec fn_spec;
  fn_spec.intra_block_edge_probability = 0.5;
  fn_spec.inter_block_edge_probability = 0.005;
  fn_spec.block_count = 8;
  fn_spec.entities_per_block = 25;
  std::string fn_ckpt, fn_k = "15,31,63,127", fn_counts = "false_negative_counts.csv",
                       fn_hist = "false_negative_hist.csv";
  double fn_removal = 0.3;
  int fn_cap = kDefaultDistanceCap;
  bool fn_synthetic = false;
  fn_cmd->add_flag("--synthetic", fn_synthetic, "use a generated KG instead of --train/--valid/--test");
  add_synthetic_options(fn_cmd, fn_spec);
  fn_cmd->add_option("--scorer", fn_ckpt, "checkpoint of the scoring model (default: pretrain on the retained triples)");
  fn_cmd->add_option("--k-grid", fn_k, "comma-separated K values");
  fn_cmd->add_option("--removal", fn_removal, "fraction of train moved to the missing set");
  fn_cmd->add_option("--distance-cap", fn_cap, "BFS cap; the last histogram bucket holds >= cap");
  fn_cmd->add_option("--counts-out", fn_counts, "false-count CSV");
  fn_cmd->add_option("--hist-out", fn_hist, "distance histogram CSV");

  // sweep-tau
  auto* sweep_cmd = app.add_subcommand("sweep-tau", "train once per tau and report validation metrics");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep_cmd);
  std::string sweep_taus = "1e-06,2e-05,1e-04,5e-04,1e-03,2e-03", sweep_out = "tau_sweep.csv";
  bool sweep_no_reverse = false;
  sweep_cmd->add_option("--taus", sweep_taus, "comma-separated tau values");
  sweep_cmd->add_option("--out", sweep_out, "output CSV");
  sweep_cmd->add_flag("--no-reverse", sweep_no_reverse, "do not add reverse relations");

  // gen-synthetic
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a block-structured KG with held-out facts");
  SyntheticKGSpec gen_spec;
  std::string gen_out;
  add_synthetic_options(gen_cmd, gen_spec);
  gen_cmd->add_option("--out", gen_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const TrainConfig cfg = train_flags.resolve();
      const auto kg = load_augmented(cfg, !train_no_reverse);
      const auto idx = build_structure_index(kg);
      auto result = train(cfg, kg, idx);
      std::string metrics_path = train_metrics;
      if (metrics_path.empty() && !cfg.checkpoint_path.empty()) metrics_path = cfg.checkpoint_path + ".metrics.json";
      EvalOptions eo;
      eo.filtered = cfg.filtered;
      eo.workers = cfg.workers;
      const auto split = kg.test.empty() ? Split::Valid : Split::Test;
      const auto res = evaluate(result.model, kg, split, eo);
      if (!metrics_path.empty()) res.metrics.write_json(metrics_path);
      std::cout << res.metrics.to_json() << '\n';
      return 0;
    }
    if (*eval_cmd) {
      require_file(eval_ckpt, "checkpoint");
      require_file(eval_train, "train");
      require_file(eval_valid, "valid");
      require_file(eval_test, "test");
      auto kg = load_dataset(eval_train, eval_valid, eval_test);
      if (!eval_no_reverse) kg = augment_reverse(kg);
      const auto header = read_checkpoint_header(eval_ckpt);
      if (eval_dim != 0 && header.dim != eval_dim)
        throw Error("checkpoint dim mismatch: expected " + std::to_string(eval_dim) + ", found " +
                    std::to_string(header.dim));
      const auto model = load_checkpoint(eval_ckpt);
      check_model_matches(model, kg, eval_dim ? std::optional<std::size_t>(eval_dim) : std::nullopt);
      EvalOptions eo;
      eo.filtered = !eval_raw;
      eo.workers = eval_workers;
      eo.max_candidates = eval_max_candidates;
      eo.seed = eval_seed;
      Split split;
      if (eval_split == "test")
        split = Split::Test;
      else if (eval_split == "valid")
        split = Split::Valid;
      else
        throw Error("unknown split: " + eval_split);
      const auto res = evaluate(model, kg, split, eo);
      if (!eval_out.empty()) res.metrics.write_json(eval_out);
      if (!eval_ranks.empty()) res.write_ranks_csv(eval_ranks, kg);
      std::cout << res.metrics.to_json() << '\n';
      return 0;
    }
    if (*fn_cmd) {
      TrainConfig cfg = fn_flags.resolve();
      KnowledgeGraph kg;
      if (fn_synthetic)
        kg = synthetic_graph(fn_spec);
      else
        kg = load_augmented(cfg, false);
      const auto ks = parse_size_list(fn_k);
      EmbeddingModel model;
      if (!fn_ckpt.empty()) {
        require_file(fn_ckpt, "checkpoint");
        model = load_checkpoint(fn_ckpt);
        check_model_matches(model, kg, std::nullopt);
      } else {
        model = pretrain_on_retain(cfg, kg, fn_removal, cfg.seed);
      }
      FalseNegOptions opts;
      opts.distance_cap = fn_cap;
      opts.workers = cfg.workers;
      FalseNegReport report;
      for (FnSampler s : {FnSampler::Simple, FnSampler::Hard})
        report.merge(run_false_negative_experiment(kg, fn_removal, s, model, ks, cfg.seed, opts));
      report.write_counts_csv(fn_counts);
      report.write_histogram_csv(fn_hist);
      for (FnSampler s : {FnSampler::Simple, FnSampler::Hard})
        for (std::size_t k : ks)
          std::cout << to_string(s) << " K=" << k << " false=" << report.false_count(s, k) << '\n';
      return 0;
    }
    if (*sweep_cmd) {
      const TrainConfig cfg = sweep_flags.resolve();
      const auto kg = load_augmented(cfg, !sweep_no_reverse);
      const auto idx = build_structure_index(kg);
      const auto taus = parse_double_list(sweep_taus);
      const auto rows = sweep_tau(cfg, taus, kg, idx);
      write_sweep_csv(sweep_out, rows);
      for (const auto& r : rows) std::cout << "tau=" << r.tau << " MRR=" << r.metrics.mrr << '\n';
      return 0;
    }
    if (*gen_cmd) {
      const auto data = generate_synthetic(gen_spec);
      write_synthetic(gen_out, data);
      std::cout << "wrote " << data.train.size() << " train, " << data.valid.size() << " valid, " << data.test.size()
                << " test triples to " << gen_out << '\n';
      return 0;
    }
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
