// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kge/kg.hpp"
#include "kge/model.hpp"

namespace kge {

struct RankingResult {
  std::size_t rank = 0;  // 1-based
  std::size_t candidate_count = 0;
};

/// Rank of `gold` given one score per entity. Entities listed in `excluded`
/// (sorted; gold is never excluded) are skipped; when `subset` is non-empty
/// only those entities (sorted) plus gold compete.
/// rank = 1 + #(score > gold) + ceil(#(score == gold, other) / 2).
RankingResult rank_from_scores(std::span<const double> scores, EntityId gold, std::span<const EntityId> excluded,
                               std::span<const EntityId> subset = {});

/// Scores every entity against g(h, r). In filtered mode all known positive
/// tails of (h, r) over train ∪ valid ∪ test except gold are removed.
RankingResult rank_tail(const EmbeddingModel& model, EntityId h, RelationId r, EntityId gold, const KnowledgeGraph& kg,
                        bool filtered = true);

struct MetricsReport {
  std::size_t count = 0;
  double mr = 0.0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;

  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

MetricsReport metrics_from_ranks(std::span<const std::size_t> ranks);

struct EvalOptions {
  bool filtered = true;
  int workers = 1;
  /// 0 = every entity is a candidate; otherwise a seeded sample of this many
  /// entities (plus the gold tail) is shared by all queries.
  std::size_t max_candidates = 0;
  std::uint64_t seed = 0;
};

struct EvaluationResult {
  MetricsReport metrics;
  std::vector<Triple> triples;
  std::vector<RankingResult> ranks;

  void write_ranks_csv(const std::filesystem::path& path, const KnowledgeGraph& kg) const;
};

/// Tail prediction over `split`; with a reverse-augmented graph this covers
/// head prediction as well.
EvaluationResult evaluate(const EmbeddingModel& model, const KnowledgeGraph& kg, Split split,
                          const EvalOptions& opts = {});

}  // namespace kge
