// SPDX-License-Identifier: Apache-2.0
#include "kge/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "kge/rng.hpp"

namespace kge {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) throw Error("invalid value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v;
  for (char c : value) v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("invalid value for " + key + ": '" + value + "'");
}

std::string canonical_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "loss") return "loss_mode";
  if (key == "learning_rate") return "lr";
  if (key == "structure_samples" || key == "m") return "M";
  if (key == "train_path") return "train";
  if (key == "valid_path") return "valid";
  if (key == "test_path") return "test";
  if (key == "checkpoint_path") return "checkpoint";
  if (key == "log_path") return "log";
  if (key == "variant") return "debias_variant";
  return key;
}

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error("batch_size must be positive");
  if (dim == 0) throw Error("dim must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("lr must be a finite value >= 0");
  if (!(weight_decay >= 0.0 && weight_decay < 1.0)) throw Error("weight_decay must be in [0, 1)");
  if (!(init_scale > 0.0)) throw Error("init_scale must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw Error("adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error("adam_eps must be positive");
  if (workers < 1) throw Error("workers must be >= 1");
  loss_config().validate();
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.tau = tau;
  c.structure_samples = structure_samples;
  c.floor_epsilon = floor_epsilon;
  c.variant = debias_variant;
  return c;
}

NegativeConfig TrainConfig::negative_config() const {
  NegativeConfig c;
  c.mode = loss_mode;
  c.structure_samples = structure_samples;
  c.hard_k = hard_k;
  c.selection = hard_selection;
  c.workers = workers;
  return c;
}

void apply_config_entry(TrainConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = canonical_key(trim(raw_key));
  const std::string value = trim(raw_value);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"loss_mode", [&] { cfg.loss_mode = parse_loss_mode(value); }},
      {"batch_size", [&] { cfg.batch_size = parse_number<std::size_t>(key, value); }},
      {"epochs", [&] { cfg.epochs = parse_number<std::size_t>(key, value); }},
      {"lr", [&] { cfg.learning_rate = parse_number<double>(key, value); }},
      {"weight_decay", [&] { cfg.weight_decay = parse_number<double>(key, value); }},
      {"dim", [&] { cfg.dim = parse_number<std::size_t>(key, value); }},
      {"tau", [&] { cfg.tau = parse_number<double>(key, value); }},
      {"M", [&] { cfg.structure_samples = parse_number<std::size_t>(key, value); }},
      {"seed", [&] { cfg.seed = parse_number<std::uint64_t>(key, value); }},
      {"aggregator", [&] { cfg.aggregator = parse_aggregator_kind(value); }},
      {"eval_every", [&] { cfg.eval_every = parse_number<std::size_t>(key, value); }},
      {"train", [&] { cfg.train_path = value; }},
      {"valid", [&] { cfg.valid_path = value; }},
      {"test", [&] { cfg.test_path = value; }},
      {"checkpoint", [&] { cfg.checkpoint_path = value; }},
      {"log", [&] { cfg.log_path = value; }},
      {"init_scale", [&] { cfg.init_scale = parse_number<double>(key, value); }},
      {"debias_variant", [&] { cfg.debias_variant = parse_debias_variant(value); }},
      {"floor_epsilon", [&] { cfg.floor_epsilon = parse_number<double>(key, value); }},
      {"hard_k", [&] { cfg.hard_k = parse_number<std::size_t>(key, value); }},
      {"hard_selection", [&] { cfg.hard_selection = parse_hard_selection(value); }},
      {"adam_beta1", [&] { cfg.adam_beta1 = parse_number<double>(key, value); }},
      {"adam_beta2", [&] { cfg.adam_beta2 = parse_number<double>(key, value); }},
      {"adam_eps", [&] { cfg.adam_eps = parse_number<double>(key, value); }},
      {"workers", [&] { cfg.workers = parse_number<int>(key, value); }},
      {"filtered", [&] { cfg.filtered = parse_bool(key, value); }},
      {"valid_max_candidates",
       [&] {
         if (value == "auto" || value.empty())
           cfg.valid_max_candidates.reset();
         else
           cfg.valid_max_candidates = parse_number<std::size_t>(key, value);
       }},
      {"neighborhood_cache", [&] { cfg.neighborhood_cache = parse_number<std::size_t>(key, value); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw Error("unknown config key: " + raw_key);
  it->second();
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), lineno, "expected key=value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError(path.string(), lineno, "empty key");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig cfg;
  for (const auto& [k, v] : read_key_value_file(path)) apply_config_entry(cfg, k, v);
  return cfg;
}

std::string describe(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "loss_mode=" << to_string(cfg.loss_mode) << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "epochs=" << cfg.epochs << '\n'
     << "lr=" << format_double(cfg.learning_rate) << '\n'
     << "weight_decay=" << format_double(cfg.weight_decay) << '\n'
     << "dim=" << cfg.dim << '\n'
     << "tau=" << format_double(cfg.tau) << '\n'
     << "M=" << cfg.structure_samples << '\n'
     << "seed=" << cfg.seed << '\n'
     << "aggregator=" << to_string(cfg.aggregator) << '\n'
     << "eval_every=" << cfg.eval_every << '\n'
     << "train=" << cfg.train_path << '\n'
     << "valid=" << cfg.valid_path << '\n'
     << "test=" << cfg.test_path << '\n'
     << "checkpoint=" << cfg.checkpoint_path << '\n'
     << "log=" << cfg.log_path << '\n'
     << "init_scale=" << format_double(cfg.init_scale) << '\n'
     << "debias_variant=" << to_string(cfg.debias_variant) << '\n'
     << "floor_epsilon=" << format_double(cfg.floor_epsilon) << '\n'
     << "hard_k=" << cfg.hard_k << '\n'
     << "hard_selection=" << to_string(cfg.hard_selection) << '\n'
     << "adam_beta1=" << format_double(cfg.adam_beta1) << '\n'
     << "adam_beta2=" << format_double(cfg.adam_beta2) << '\n'
     << "adam_eps=" << format_double(cfg.adam_eps) << '\n'
     << "workers=" << cfg.workers << '\n'
     << "filtered=" << (cfg.filtered ? "true" : "false") << '\n'
     << "valid_max_candidates="
     << (cfg.valid_max_candidates ? std::to_string(*cfg.valid_max_candidates) : std::string("auto")) << '\n'
     << "neighborhood_cache=" << cfg.neighborhood_cache << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const EmbeddingModel& model, double lr, double beta1, double beta2, double eps,
                             double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
  dense_m_.assign(model.aggregator().values.size(), 0.0);
  dense_v_.assign(model.aggregator().values.size(), 0.0);
}

kernels::AdamCoeffs AdamOptimizer::coeffs(std::size_t t) const {
  const double td = static_cast<double>(t);
  return {lr_, beta1_, beta2_, eps_, 1.0 - std::pow(beta1_, td), 1.0 - std::pow(beta2_, td), wd_};
}

void AdamOptimizer::update_rows(RowState& state, std::span<double> table, const SparseRowGradient& grad,
                                std::size_t dim) {
  const auto& k = kernels::active();
  for (std::int32_t id : grad.touched()) {
    auto [it, inserted] = state.slot.try_emplace(id, state.t.size());
    if (inserted) {
      state.t.push_back(0);
      state.m.resize(state.m.size() + dim, 0.0);
      state.v.resize(state.v.size() + dim, 0.0);
    }
    const std::size_t s = it->second;
    const auto c = coeffs(++state.t[s]);
    const auto g = grad.row(id);
    k.adam_update(table.data() + static_cast<std::size_t>(id) * dim, g.data(), state.m.data() + s * dim,
                  state.v.data() + s * dim, dim, c);
  }
}

void AdamOptimizer::step(EmbeddingModel& model, const GradientTape& tape) {
  const std::size_t d = model.dim();
  update_rows(entity_, model.entity_table(), tape.entities, d);
  update_rows(relation_, model.relation_table(), tape.relations, d);
  ++dense_steps_;
  auto values = model.aggregator_values();
  if (!values.empty()) {
    if (tape.aggregator.size() != values.size()) throw Error("aggregator gradient size mismatch");
    kernels::active().adam_update(values.data(), tape.aggregator.data(), dense_m_.data(), dense_v_.data(),
                                  values.size(), coeffs(dense_steps_));
  }
}

// ---------------------------------------------------------------------------

EvalOptions validation_options(const TrainConfig& cfg, const KnowledgeGraph& kg) {
  EvalOptions o;
  o.filtered = cfg.filtered;
  o.workers = cfg.workers;
  o.seed = derive_seed(cfg.seed, 0xe7a1);
  if (cfg.valid_max_candidates)
    o.max_candidates = *cfg.valid_max_candidates;
  else
    o.max_candidates = kg.entity_count() > 20000 ? 10000 : 0;
  return o;
}

namespace {

std::string batch_dump(const TripleBatch& batch, const KnowledgeGraph& kg) {
  std::ostringstream os;
  for (const auto& t : batch.triples)
    os << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t' << kg.entities.name(t.tail)
       << '\n';
  return os.str();
}

nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["count"] = m.count;
  j["MR"] = m.mr;
  j["MRR"] = m.mrr;
  j["Hit@1"] = m.hits1;
  j["Hit@3"] = m.hits3;
  j["Hit@10"] = m.hits10;
  return j;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const KnowledgeGraph& kg, const StructureIndex& idx) {
  cfg.validate();
  return train(cfg, kg, idx,
               init_model(kg.entity_count(), kg.relation_count(), cfg.dim, cfg.seed, cfg.init_scale, cfg.aggregator));
}

TrainResult train(const TrainConfig& cfg, const KnowledgeGraph& kg, const StructureIndex& idx,
                  EmbeddingModel initial) {
  cfg.validate();
  if (initial.entity_count() != kg.entity_count() || initial.relation_count() != kg.relation_count())
    throw Error("model shape does not match the dataset: expected " + std::to_string(kg.entity_count()) +
                " entities / " + std::to_string(kg.relation_count()) + " relations, found " +
                std::to_string(initial.entity_count()) + " / " + std::to_string(initial.relation_count()));
  if (initial.dim() != cfg.dim)
    throw Error("model dim mismatch: expected " + std::to_string(cfg.dim) + ", found " +
                std::to_string(initial.dim()));
  if (idx.entity_count() != kg.entity_count()) throw Error("structure index does not match the dataset");

  TrainResult result;
  result.model = std::move(initial);
  EmbeddingModel& model = result.model;

  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path);
    if (!log_file) throw Error("cannot open log file: " + cfg.log_path);
  }
  auto emit = [&](const nlohmann::ordered_json& j) {
    std::string line = j.dump();
    if (log_file) log_file << line << '\n' << std::flush;
    result.log.push_back(std::move(line));
  };

  AdamOptimizer opt(model, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
  NeighborhoodCache cache(idx, cfg.neighborhood_cache);
  const LossConfig loss_cfg = cfg.loss_config();
  const NegativeConfig neg_cfg = cfg.negative_config();
  const EvalOptions eval_opts = validation_options(cfg, kg);
  GradientTape tape(model);
  double best_mrr = -1.0;

  auto run_validation = [&](std::size_t epoch) {
    if (kg.valid.empty()) return;
    const auto res = evaluate(model, kg, Split::Valid, eval_opts);
    nlohmann::ordered_json j;
    j["event"] = "valid";
    j["epoch"] = epoch;
    j["step"] = result.steps;
    j["metrics"] = metrics_json(res.metrics);
    emit(j);
    result.last_valid = res.metrics;
    if (res.metrics.mrr > best_mrr) {
      best_mrr = res.metrics.mrr;
      result.best_valid = res.metrics;
      if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path + ".best", model);
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = make_batches(kg, cfg.batch_size, derive_seed(cfg.seed, 0xe90c, epoch));
    double epoch_loss = 0.0;
    std::size_t epoch_triples = 0;
    for (const auto& batch : batches) {
      const auto negs =
          assemble_training_negatives(batch, model, kg, idx, neg_cfg, derive_seed(cfg.seed, 0x5a3b, result.steps), &cache);
      tape.clear();
      const LossValue value = compute_loss(cfg.loss_mode, batch, negs, model, loss_cfg, &tape);
      if (!std::isfinite(value.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(result.steps) + "; batch:\n" + batch_dump(batch, kg));
      opt.step(model, tape);
      if (!model.all_finite())
        throw TrainingError("non-finite parameter after epoch " + std::to_string(epoch) + " step " +
                            std::to_string(result.steps) + "; batch:\n" + batch_dump(batch, kg));
      ++result.steps;
      epoch_loss += value.loss;
      epoch_triples += batch.size();

      const double n = static_cast<double>(std::max<std::size_t>(value.diag.triples, 1));
      nlohmann::ordered_json j;
      j["event"] = "step";
      j["epoch"] = epoch;
      j["step"] = result.steps;
      j["loss"] = value.loss / n;
      j["pos"] = value.diag.pos;
      j["neg"] = value.diag.neg;
      j["false_neg"] = value.diag.false_neg;
      j["neg_hasa"] = value.diag.neg_hasa;
      j["clamp_hits"] = value.diag.clamp_hits;
      j["mean_k"] = value.diag.mean_k;
      emit(j);

      if (cfg.eval_every > 0 && result.steps % cfg.eval_every == 0) run_validation(epoch);
    }
    const double mean = epoch_triples ? epoch_loss / static_cast<double>(epoch_triples) : 0.0;
    result.epoch_mean_loss.push_back(mean);
    nlohmann::ordered_json j;
    j["event"] = "epoch";
    j["epoch"] = epoch;
    j["step"] = result.steps;
    j["mean_loss"] = mean;
    emit(j);
    if (cfg.eval_every == 0) run_validation(epoch);
  }

  if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
  return result;
}

std::vector<SweepRow> sweep_tau(const TrainConfig& cfg, std::span<const double> tau_values, const KnowledgeGraph& kg,
                                const StructureIndex& idx) {
  if (kg.valid.empty()) throw Error("tau sweep needs a validation split");
  std::vector<SweepRow> rows;
  for (double tau : tau_values) {
    TrainConfig run = cfg;
    run.tau = tau;
    run.checkpoint_path.clear();
    run.log_path.clear();
    run.eval_every = std::numeric_limits<std::size_t>::max();
    auto res = train(run, kg, idx);
    rows.push_back({tau, evaluate(res.model, kg, Split::Valid, validation_options(run, kg)).metrics});
  }
  return rows;
}

EmbeddingModel pretrain_on_retain(const TrainConfig& cfg, const KnowledgeGraph& kg, double removal_fraction,
                                  std::uint64_t split_seed) {
  KnowledgeGraph retained = kg;
  retained.train = split_retain_missing(kg.train, removal_fraction, split_seed).retain;
  retained.rebuild_indexes();
  TrainConfig run = cfg;
  run.checkpoint_path.clear();
  run.eval_every = std::numeric_limits<std::size_t>::max();
  return train(run, retained, build_structure_index(retained)).model;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string());
  // Shortest representation that parses back to the same double.
  const auto num = [](double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
  };
  out << "tau,MR,MRR,Hit@1,Hit@3,Hit@10\n";
  for (const auto& r : rows)
    out << num(r.tau) << ',' << num(r.metrics.mr) << ',' << num(r.metrics.mrr) << ',' << num(r.metrics.hits1) << ','
        << num(r.metrics.hits3) << ',' << num(r.metrics.hits10) << '\n';
}

}  // namespace kge
