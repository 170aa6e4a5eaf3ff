// SPDX-License-Identifier: Apache-2.0
//
// Negative-sample distributions (batch tail frequency, query softmax, top-k
// hard negatives, structural alpha) and the false-negative experiment.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "kge/graph_index.hpp"
#include "kge/kg.hpp"
#include "kge/model.hpp"

namespace kge {

enum class LossMode { Simple, Hard, Hasa, HasaPlus };
enum class HardSelection { TopK, Softmax };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view name);
std::string_view to_string(HardSelection s);
HardSelection parse_hard_selection(std::string_view name);

/// Finite distribution: outcomes[i] has probability probs[i].
struct Categorical {
  std::vector<EntityId> outcomes;
  std::vector<double> probs;

  double probability(EntityId e) const;
};

/// P(t) = #(t) / Σ #(t') over tail occurrences in the batch.
Categorical simple_negative_probs(const TripleBatch& batch);

/// P(t) ∝ exp(q · e_t) over `candidates`, max-shifted before exponentiation.
Categorical hard_negative_softmax_probs(std::span<const double> query, std::span<const EntityId> candidates,
                                        const EmbeddingModel& model);

/// The k candidates with the largest q · e after removing `known_positives`
/// (sorted). Ties go to the smaller entity id. Throws if fewer than k remain.
std::vector<EntityId> hard_negative_topk(std::span<const double> query, std::span<const EntityId> candidates,
                                         const EmbeddingModel& model, std::size_t k,
                                         std::span<const EntityId> known_positives);

/// Same with every entity as a candidate (scored with one pass over the table).
std::vector<EntityId> hard_negative_topk_all(std::span<const double> query, const EmbeddingModel& model, std::size_t k,
                                             std::span<const EntityId> known_positives);

/// n i.i.d. draws from hard_negative_softmax_probs.
std::vector<EntityId> hard_negative_softmax_sample(std::span<const double> query, std::span<const EntityId> candidates,
                                                   const EmbeddingModel& model, std::size_t n, std::uint64_t seed);

struct TripleNegatives {
  /// {t⁻_j}: batch heads and tails minus every occurrence of the positive
  /// tail, followed by the hard negatives (if any).
  std::vector<EntityId> negatives;
  /// {s⁻_m}: draws from alpha(h), with replacement. Empty when the head has no
  /// entities within two hops or M = 0.
  std::vector<EntityId> structure;
  /// Negative queries (h', r') for the tail-side term.
  std::vector<std::pair<EntityId, RelationId>> contexts;
};

struct NegativeSampleBatch {
  std::vector<TripleNegatives> per_triple;
  /// Mean of |negatives| over the batch.
  double mean_k() const;
};

struct NegativeConfig {
  LossMode mode = LossMode::Simple;
  std::size_t structure_samples = 4;  // M
  std::size_t hard_k = 3;
  HardSelection selection = HardSelection::TopK;
  int workers = 1;
};

/// Builds every triple's negatives for one training step.
///   simple:    batch heads + tails minus the positive tail
///   hard:      simple + hard_k hard negatives over all entities, filtered by
///              training positives of (h, r)
///   hasa:      hard + M structure samples from alpha(h)
///   hasa_plus: hasa + every other distinct (h', r') of the batch
NegativeSampleBatch assemble_training_negatives(const TripleBatch& batch, const EmbeddingModel& model,
                                                const KnowledgeGraph& kg, const StructureIndex& idx,
                                                const NegativeConfig& cfg, std::uint64_t seed,
                                                NeighborhoodCache* cache = nullptr);

// ---------------------------------------------------------------------------
// False-negative experiment

enum class FnSampler { Simple, Hard };
std::string_view to_string(FnSampler s);

struct RetainMissingSplit {
  std::vector<Triple> retain;
  std::vector<Triple> missing;
};

/// Moves round(fraction * |train|) randomly chosen triples into `missing`.
RetainMissingSplit split_retain_missing(std::span<const Triple> train, double fraction, std::uint64_t seed);

struct FalseNegCountRow {
  std::size_t k;
  FnSampler sampler;
  std::size_t false_count;
  std::size_t total_count;
};

struct FalseNegHistRow {
  FnSampler sampler;
  bool is_false;  // label: false negative (true) or true negative (false)
  int d_bucket;   // 0..cap-1 exact, cap = "at least cap hops or unreachable"
  std::size_t count;
};

struct FalseNegReport {
  std::vector<FalseNegCountRow> counts;
  std::vector<FalseNegHistRow> histogram;
  int distance_cap = kDefaultDistanceCap;

  void merge(const FalseNegReport& other);
  /// Mean bucketed distance over negatives with the given label.
  double mean_distance(FnSampler sampler, bool is_false) const;
  /// Share of false negatives with d <= max_d.
  double false_mass_within(FnSampler sampler, int max_d) const;
  std::size_t false_count(FnSampler sampler, std::size_t k) const;

  void write_counts_csv(const std::filesystem::path& path) const;
  void write_histogram_csv(const std::filesystem::path& path) const;
};

struct FalseNegOptions {
  int distance_cap = kDefaultDistanceCap;
  int workers = 1;
};

/// Splits train into retain/missing, then for every K: batches retain with
/// |T_batch| = (K + 1) / 2 and draws K negatives per triple from the chosen
/// sampler over the batch (positive tail and retained positives of (h, r)
/// excluded). A negative (h, r, t⁻) found in the missing set is false.
/// d(h, t⁻) is measured on the graph induced by the retained triples.
FalseNegReport run_false_negative_experiment(const KnowledgeGraph& kg, double removal_fraction, FnSampler sampler,
                                             const EmbeddingModel& model, std::span<const std::size_t> k_values,
                                             std::uint64_t seed, const FalseNegOptions& opts = {});

}  // namespace kge
