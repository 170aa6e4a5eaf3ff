// SPDX-License-Identifier: Apache-2.0
#include "kge/evaluator.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "kge/kernels.hpp"
#include "kge/parallel.hpp"
#include "kge/rng.hpp"

namespace kge {

RankingResult rank_from_scores(std::span<const double> scores, EntityId gold, std::span<const EntityId> excluded,
                               std::span<const EntityId> subset) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size()) throw Error("rank: gold id out of range");
  const double g = scores[static_cast<std::size_t>(gold)];
  std::size_t greater = 0, ties = 0, candidates = 1;
  auto consider = [&](EntityId e) {
    if (e == gold || std::binary_search(excluded.begin(), excluded.end(), e)) return;
    ++candidates;
    const double s = scores[static_cast<std::size_t>(e)];
    if (s > g) {
      ++greater;
    } else if (s == g) {
      ++ties;
    }
  };
  if (subset.empty()) {
    for (std::size_t e = 0; e < scores.size(); ++e) consider(static_cast<EntityId>(e));
  } else {
    for (EntityId e : subset) consider(e);
  }
  return {1 + greater + (ties + 1) / 2, candidates};
}

RankingResult rank_tail(const EmbeddingModel& model, EntityId h, RelationId r, EntityId gold, const KnowledgeGraph& kg,
                        bool filtered) {
  model.check_entity(gold);
  const auto query = aggregate(model, h, r);
  std::vector<double> scores(model.entity_count());
  kernels::active().score_rows(model.entity_table().data(), model.entity_count(), model.dim(), query.data(),
                               scores.data());
  const auto excluded = filtered ? kg.known_positive_tails.tails(h, r) : std::span<const EntityId>{};
  return rank_from_scores(scores, gold, excluded);
}

MetricsReport metrics_from_ranks(std::span<const std::size_t> ranks) {
  MetricsReport m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1 ? 1.0 : 0.0;
    m.hits3 += r <= 3 ? 1.0 : 0.0;
    m.hits10 += r <= 10 ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j{{"count", count}, {"MR", mr},         {"MRR", mrr},
                   {"Hit@1", hits1}, {"Hit@3", hits3}, {"Hit@10", hits10}};
  return j.dump();
}

void MetricsReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json() << '\n';
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "count,MR,MRR,Hit@1,Hit@3,Hit@10\n"
      << count << ',' << mr << ',' << mrr << ',' << hits1 << ',' << hits3 << ',' << hits10 << '\n';
}

void EvaluationResult::write_ranks_csv(const std::filesystem::path& path, const KnowledgeGraph& kg) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "head,relation,tail,rank,candidates\n";
  for (std::size_t i = 0; i < triples.size(); ++i) {
    out << kg.entities.name(triples[i].head) << ',' << kg.relations.name(triples[i].relation) << ','
        << kg.entities.name(triples[i].tail) << ',' << ranks[i].rank << ',' << ranks[i].candidate_count << '\n';
  }
}

EvaluationResult evaluate(const EmbeddingModel& model, const KnowledgeGraph& kg, Split split, const EvalOptions& opts) {
  const auto& triples = kg.split(split);
  if (triples.empty()) throw Error("evaluate: split is empty");
  const std::size_t n_ent = model.entity_count();

  std::vector<EntityId> subset;
  if (opts.max_candidates > 0 && opts.max_candidates < n_ent) {
    std::vector<EntityId> all(n_ent);
    for (std::size_t e = 0; e < n_ent; ++e) all[e] = static_cast<EntityId>(e);
    Rng rng(derive_seed(opts.seed, 0xe7a1));
    rng.shuffle(all);
    subset.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(opts.max_candidates));
    std::sort(subset.begin(), subset.end());
  }

  EvaluationResult result;
  result.triples = triples;
  result.ranks.resize(triples.size());
  const auto& k = kernels::active();
  parallel_for(triples.size(), opts.workers, [&](std::size_t i) {
    const Triple& t = triples[i];
    const auto query = aggregate(model, t.head, t.relation);
    std::vector<double> scores(n_ent);
    k.score_rows(model.entity_table().data(), n_ent, model.dim(), query.data(), scores.data());
    const auto excluded = opts.filtered ? kg.known_positive_tails.tails(t.head, t.relation)
                                        : std::span<const EntityId>{};
    result.ranks[i] = rank_from_scores(scores, t.tail, excluded, subset);
  });
  std::vector<std::size_t> ranks;
  ranks.reserve(result.ranks.size());
  for (const auto& r : result.ranks) ranks.push_back(r.rank);
  result.metrics = metrics_from_ranks(ranks);
  return result;
}

}  // namespace kge
