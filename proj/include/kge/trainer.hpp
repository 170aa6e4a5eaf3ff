// SPDX-License-Identifier: Apache-2.0
//
// Training loop: negative assembly, loss + gradients, AdamW with lazily
// allocated per-row moments, validation, checkpoints and the tau sweep.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kge/evaluator.hpp"
#include "kge/graph_index.hpp"
#include "kge/kernels.hpp"
#include "kge/kg.hpp"
#include "kge/losses.hpp"
#include "kge/model.hpp"
#include "kge/negsampler.hpp"

namespace kge {

struct TrainConfig {
  LossMode loss_mode = LossMode::Simple;
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  double learning_rate = 2e-5;
  double weight_decay = 1e-4;
  std::size_t dim = 500;
  double tau = 2e-5;
  std::size_t structure_samples = 4;
  std::uint64_t seed = 0;
  AggregatorKind aggregator = AggregatorKind::Gru;
  /// Validate every N steps; 0 = at the end of every epoch.
  std::size_t eval_every = 0;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  /// Final checkpoint path; the best-validation-MRR model goes to "<path>.best".
  std::string checkpoint_path;
  /// JSON-lines training log.
  std::string log_path;

  double init_scale = 0.1;
  DebiasVariant debias_variant = DebiasVariant::Eq7;
  double floor_epsilon = 1e-6;
  std::size_t hard_k = 3;
  HardSelection hard_selection = HardSelection::TopK;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int workers = 1;
  bool filtered = true;
  /// Candidate cap for periodic validation; unset = all entities when
  /// |E| <= 20000, else 10000 sampled entities plus the gold tail.
  std::optional<std::size_t> valid_max_candidates;
  std::size_t neighborhood_cache = 65536;

  void validate() const;
  LossConfig loss_config() const;
  NegativeConfig negative_config() const;
};

/// Sets one field from its key=value spelling (keys match the CLI flags
/// with dashes replaced by underscores). Throws on unknown keys or bad values.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses a flat key=value file ('#' starts a comment; blank lines ignored).
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

TrainConfig load_train_config(const std::filesystem::path& path);

/// key=value rendering accepted back by apply_config_entry.
std::string describe(const TrainConfig& cfg);

/// Per-row AdamW state for the two lookup tables plus dense state for the
/// aggregator. Moments are created the first time a row receives a gradient
/// and only touched rows are updated (and decayed) in a step.
class AdamOptimizer {
 public:
  AdamOptimizer(const EmbeddingModel& model, double lr, double beta1, double beta2, double eps, double weight_decay);

  void step(EmbeddingModel& model, const GradientTape& tape);
  std::size_t steps() const noexcept { return dense_steps_; }
  std::size_t allocated_entity_rows() const noexcept { return entity_.slot.size(); }

 private:
  struct RowState {
    std::unordered_map<std::int32_t, std::size_t> slot;
    std::vector<double> m;
    std::vector<double> v;
    std::vector<std::size_t> t;
  };
  void update_rows(RowState& state, std::span<double> table, const SparseRowGradient& grad, std::size_t dim);
  kernels::AdamCoeffs coeffs(std::size_t t) const;

  double lr_, beta1_, beta2_, eps_, wd_;
  RowState entity_;
  RowState relation_;
  std::vector<double> dense_m_;
  std::vector<double> dense_v_;
  std::size_t dense_steps_ = 0;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<std::string> log;  // JSON lines
  std::vector<double> epoch_mean_loss;
  std::optional<MetricsReport> best_valid;
  std::optional<MetricsReport> last_valid;
  std::size_t steps = 0;
};

/// Runs cfg.epochs epochs. Deterministic for a fixed config, seed and kernel
/// backend. Throws TrainingError on a non-finite loss or parameter.
TrainResult train(const TrainConfig& cfg, const KnowledgeGraph& kg, const StructureIndex& idx);

/// Same, starting from `initial` instead of a freshly initialized model.
TrainResult train(const TrainConfig& cfg, const KnowledgeGraph& kg, const StructureIndex& idx,
                  EmbeddingModel initial);

EvalOptions validation_options(const TrainConfig& cfg, const KnowledgeGraph& kg);

struct SweepRow {
  double tau;
  MetricsReport metrics;
};

/// One training run per tau (same seed), scored on the validation split.
std::vector<SweepRow> sweep_tau(const TrainConfig& cfg, std::span<const double> tau_values, const KnowledgeGraph& kg,
                                const StructureIndex& idx);

/// Scoring model for run_false_negative_experiment(kg, removal_fraction, ...,
/// split_seed): trained with `cfg` on exactly the retained triples that the
/// experiment will use, so the missing facts stay unseen.
EmbeddingModel pretrain_on_retain(const TrainConfig& cfg, const KnowledgeGraph& kg, double removal_fraction,
                                  std::uint64_t split_seed);

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace kge
