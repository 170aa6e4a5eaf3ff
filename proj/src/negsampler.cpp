// SPDX-License-Identifier: Apache-2.0
#include "kge/negsampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "kge/kernels.hpp"
#include "kge/parallel.hpp"
#include "kge/rng.hpp"

namespace kge {

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Simple:
      return "simple";
    case LossMode::Hard:
      return "hard";
    case LossMode::Hasa:
      return "hasa";
    case LossMode::HasaPlus:
      return "hasa_plus";
  }
  return "?";
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "simple") return LossMode::Simple;
  if (name == "hard") return LossMode::Hard;
  if (name == "hasa") return LossMode::Hasa;
  if (name == "hasa_plus" || name == "hasa+") return LossMode::HasaPlus;
  throw Error("unknown loss mode '" + std::string(name) + "' (expected simple, hard, hasa or hasa_plus)");
}

std::string_view to_string(HardSelection s) { return s == HardSelection::TopK ? "topk" : "softmax"; }

HardSelection parse_hard_selection(std::string_view name) {
  if (name == "topk") return HardSelection::TopK;
  if (name == "softmax") return HardSelection::Softmax;
  throw Error("unknown hard-negative selection '" + std::string(name) + "' (expected topk or softmax)");
}

std::string_view to_string(FnSampler s) { return s == FnSampler::Simple ? "simple" : "hard"; }

double Categorical::probability(EntityId e) const {
  double p = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    if (outcomes[i] == e) p += probs[i];
  return p;
}

Categorical simple_negative_probs(const TripleBatch& batch) {
  if (batch.triples.empty()) throw Error("simple_negative_probs: empty batch");
  std::map<EntityId, std::size_t> counts;
  for (const Triple& t : batch.triples) ++counts[t.tail];
  Categorical c;
  const auto total = static_cast<double>(batch.triples.size());
  for (const auto& [e, n] : counts) {
    c.outcomes.push_back(e);
    c.probs.push_back(static_cast<double>(n) / total);
  }
  return c;
}

namespace {

std::vector<EntityId> unique_sorted(std::span<const EntityId> ids) {
  std::vector<EntityId> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Keeps the k best (score desc, id asc) seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { best_.reserve(k + 1); }
  void offer(EntityId id, double s) {
    if (best_.size() == k_ && !better(s, id, best_.back().first, best_.back().second)) return;
    auto pos = std::find_if(best_.begin(), best_.end(),
                            [&](const auto& e) { return better(s, id, e.first, e.second); });
    best_.insert(pos, {s, id});
    if (best_.size() > k_) best_.pop_back();
  }
  std::vector<EntityId> ids() const {
    std::vector<EntityId> out;
    for (const auto& e : best_) out.push_back(e.second);
    return out;
  }

 private:
  static bool better(double s, EntityId id, double s2, EntityId id2) { return s > s2 || (s == s2 && id < id2); }
  std::size_t k_;
  std::vector<std::pair<double, EntityId>> best_;
};

}  // namespace

Categorical hard_negative_softmax_probs(std::span<const double> query, std::span<const EntityId> candidates,
                                        const EmbeddingModel& model) {
  if (candidates.empty()) throw Error("hard_negative_softmax: empty candidate set");
  Categorical c;
  c.outcomes.assign(candidates.begin(), candidates.end());
  c.probs.resize(candidates.size());
  double max_s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c.probs[i] = score(query, model.entity(candidates[i]));
    max_s = std::max(max_s, c.probs[i]);
  }
  double z = 0.0;
  for (double& p : c.probs) {
    p = std::exp(p - max_s);
    z += p;
  }
  for (double& p : c.probs) p /= z;
  return c;
}

std::vector<EntityId> hard_negative_topk(std::span<const double> query, std::span<const EntityId> candidates,
                                         const EmbeddingModel& model, std::size_t k,
                                         std::span<const EntityId> known_positives) {
  const auto pool = unique_sorted(candidates);
  std::vector<EntityId> allowed;
  allowed.reserve(pool.size());
  std::set_difference(pool.begin(), pool.end(), known_positives.begin(), known_positives.end(),
                      std::back_inserter(allowed));
  if (allowed.size() < k) {
    throw Error("hard_negative_topk: need " + std::to_string(k) + " candidates after filtering positives, have " +
                std::to_string(allowed.size()) + " (short by " + std::to_string(k - allowed.size()) + ")");
  }
  TopK top(k);
  for (EntityId e : allowed) top.offer(e, score(query, model.entity(e)));
  return top.ids();
}

std::vector<EntityId> hard_negative_topk_all(std::span<const double> query, const EmbeddingModel& model, std::size_t k,
                                             std::span<const EntityId> known_positives) {
  const std::size_t n = model.entity_count();
  std::size_t blocked = 0;
  for (EntityId e : known_positives)
    if (e >= 0 && static_cast<std::size_t>(e) < n) ++blocked;
  if (n - blocked < k) {
    throw Error("hard_negative_topk: need " + std::to_string(k) + " candidates after filtering positives, have " +
                std::to_string(n - blocked) + " (short by " + std::to_string(k - (n - blocked)) + ")");
  }
  std::vector<double> scores(n);
  kernels::active().score_rows(model.entity_table().data(), n, model.dim(), query.data(), scores.data());
  TopK top(k);
  auto pos = known_positives.begin();
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<EntityId>(i);
    while (pos != known_positives.end() && *pos < e) ++pos;
    if (pos != known_positives.end() && *pos == e) continue;
    top.offer(e, scores[i]);
  }
  return top.ids();
}

std::vector<EntityId> hard_negative_softmax_sample(std::span<const double> query, std::span<const EntityId> candidates,
                                                   const EmbeddingModel& model, std::size_t n, std::uint64_t seed) {
  const Categorical c = hard_negative_softmax_probs(query, candidates, model);
  const DiscreteSampler sampler(c.probs);
  Rng rng(derive_seed(seed, 0x50f7));
  std::vector<EntityId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(c.outcomes[sampler.sample(rng)]);
  return out;
}

double NegativeSampleBatch::mean_k() const {
  if (per_triple.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : per_triple) total += static_cast<double>(t.negatives.size());
  return total / static_cast<double>(per_triple.size());
}

NegativeSampleBatch assemble_training_negatives(const TripleBatch& batch, const EmbeddingModel& model,
                                                const KnowledgeGraph& kg, const StructureIndex& idx,
                                                const NegativeConfig& cfg, std::uint64_t seed,
                                                NeighborhoodCache* cache) {
  NegativeSampleBatch out;
  out.per_triple.resize(batch.size());
  const bool want_hard = cfg.mode != LossMode::Simple && cfg.hard_k > 0;
  const bool want_structure =
      (cfg.mode == LossMode::Hasa || cfg.mode == LossMode::HasaPlus) && cfg.structure_samples > 0;
  const bool want_contexts = cfg.mode == LossMode::HasaPlus;

  std::vector<std::pair<EntityId, RelationId>> queries;
  if (want_contexts) {
    for (const Triple& t : batch.triples) queries.emplace_back(t.head, t.relation);
    std::sort(queries.begin(), queries.end());
    queries.erase(std::unique(queries.begin(), queries.end()), queries.end());
  }

  parallel_for(batch.size(), cfg.workers, [&](std::size_t i) {
    const Triple& tr = batch.triples[i];
    TripleNegatives& neg = out.per_triple[i];
    neg.negatives.reserve(batch.batch_entities.size() + cfg.hard_k);
    for (EntityId e : batch.batch_entities)
      if (e != tr.tail) neg.negatives.push_back(e);

    if (want_hard) {
      const auto query = aggregate(model, tr.head, tr.relation);
      const auto train_pos = kg.train_positive_tails.tails(tr.head, tr.relation);
      std::vector<EntityId> blocked(train_pos.begin(), train_pos.end());
      if (!std::binary_search(blocked.begin(), blocked.end(), tr.tail))
        blocked.insert(std::upper_bound(blocked.begin(), blocked.end(), tr.tail), tr.tail);
      std::vector<EntityId> hard;
      if (cfg.selection == HardSelection::TopK) {
        hard = hard_negative_topk_all(query, model, cfg.hard_k, blocked);
      } else {
        std::vector<EntityId> candidates;
        candidates.reserve(model.entity_count());
        for (std::size_t e = 0; e < model.entity_count(); ++e) {
          const auto id = static_cast<EntityId>(e);
          if (!std::binary_search(blocked.begin(), blocked.end(), id)) candidates.push_back(id);
        }
        if (!candidates.empty())
          hard = hard_negative_softmax_sample(query, candidates, model, cfg.hard_k, derive_seed(seed, 1, i));
      }
      neg.negatives.insert(neg.negatives.end(), hard.begin(), hard.end());
    }

    if (want_structure) {
      AlphaDistribution alpha;
      if (cache != nullptr) {
        alpha = AlphaDistribution(*cache->get(tr.head));
      } else {
        alpha = alpha_distribution(idx, tr.head);
      }
      if (!alpha.empty()) {
        Rng rng(derive_seed(seed, 2, i));
        neg.structure.reserve(cfg.structure_samples);
        for (std::size_t m = 0; m < cfg.structure_samples; ++m) neg.structure.push_back(alpha.sample(rng));
      }
    }

    if (want_contexts) {
      for (const auto& q : queries)
        if (q != std::make_pair(tr.head, tr.relation)) neg.contexts.push_back(q);
    }
  });
  return out;
}

RetainMissingSplit split_retain_missing(std::span<const Triple> train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("removal fraction must lie in (0, 1)");
  std::vector<Triple> order(train.begin(), train.end());
  Rng rng(derive_seed(seed, 0x3155));
  rng.shuffle(order);
  const auto n_missing = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  RetainMissingSplit s;
  s.missing.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_missing));
  s.retain.assign(order.begin() + static_cast<std::ptrdiff_t>(n_missing), order.end());
  return s;
}

void FalseNegReport::merge(const FalseNegReport& other) {
  counts.insert(counts.end(), other.counts.begin(), other.counts.end());
  histogram.insert(histogram.end(), other.histogram.begin(), other.histogram.end());
}

double FalseNegReport::mean_distance(FnSampler sampler, bool is_false) const {
  double weighted = 0.0, total = 0.0;
  for (const auto& row : histogram) {
    if (row.sampler != sampler || row.is_false != is_false) continue;
    weighted += static_cast<double>(row.d_bucket) * static_cast<double>(row.count);
    total += static_cast<double>(row.count);
  }
  return total == 0.0 ? std::numeric_limits<double>::quiet_NaN() : weighted / total;
}

double FalseNegReport::false_mass_within(FnSampler sampler, int max_d) const {
  double within = 0.0, total = 0.0;
  for (const auto& row : histogram) {
    if (row.sampler != sampler || !row.is_false) continue;
    total += static_cast<double>(row.count);
    if (row.d_bucket <= max_d) within += static_cast<double>(row.count);
  }
  return total == 0.0 ? std::numeric_limits<double>::quiet_NaN() : within / total;
}

std::size_t FalseNegReport::false_count(FnSampler sampler, std::size_t k) const {
  for (const auto& row : counts)
    if (row.sampler == sampler && row.k == k) return row.false_count;
  throw Error("FalseNegReport: no row for K=" + std::to_string(k));
}

void FalseNegReport::write_counts_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "K,sampler,false_count\n";
  for (const auto& row : counts) out << row.k << ',' << to_string(row.sampler) << ',' << row.false_count << '\n';
}

void FalseNegReport::write_histogram_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sampler,label,d_bucket,count\n";
  for (const auto& row : histogram) {
    out << to_string(row.sampler) << ',' << (row.is_false ? "false" : "true") << ',' << row.d_bucket << ','
        << row.count << '\n';
  }
}

FalseNegReport run_false_negative_experiment(const KnowledgeGraph& kg, double removal_fraction, FnSampler sampler,
                                             const EmbeddingModel& model, std::span<const std::size_t> k_values,
                                             std::uint64_t seed, const FalseNegOptions& opts) {
  if (opts.distance_cap < 1) throw Error("distance cap must be >= 1");
  const RetainMissingSplit split = split_retain_missing(kg.train, removal_fraction, seed);
  TailIndex retained, missing;
  {
    const std::vector<Triple>* r[] = {&split.retain};
    retained.build(r);
    const std::vector<Triple>* m[] = {&split.missing};
    missing.build(m);
  }
  const StructureIndex idx(kg.entity_count(), split.retain);
  const int cap = opts.distance_cap;
  const std::size_t buckets = static_cast<std::size_t>(cap) + 1;

  FalseNegReport report;
  report.distance_cap = cap;
  // hist[label][bucket], label 0 = true negative, 1 = false negative
  std::vector<std::size_t> hist(2 * buckets, 0);

  for (std::size_t k : k_values) {
    if (k == 0) throw Error("K must be >= 1");
    const std::size_t batch_size = (k + 1) / 2;
    const auto batches = make_batches(split.retain, batch_size, derive_seed(seed, 0xfe, k));
    struct Partial {
      std::size_t false_count = 0;
      std::size_t total = 0;
      std::vector<std::size_t> hist;
    };
    std::vector<Partial> partial(batches.size());

    parallel_for(batches.size(), opts.workers, [&](std::size_t b) {
      const TripleBatch& batch = batches[b];
      Partial& acc = partial[b];
      acc.hist.assign(2 * buckets, 0);
      BfsWorkspace ws(kg.entity_count());
      std::vector<EntityId> distinct = unique_sorted(batch.batch_entities);

      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Triple& tr = batch.triples[i];
        const auto positives = retained.tails(tr.head, tr.relation);
        auto excluded = [&](EntityId e) {
          return e == tr.tail || std::binary_search(positives.begin(), positives.end(), e);
        };
        std::vector<EntityId> outcomes;
        std::vector<double> weights;
        if (sampler == FnSampler::Simple) {
          std::map<EntityId, double> freq;
          for (const Triple& o : batch.triples)
            if (!excluded(o.tail)) freq[o.tail] += 1.0;
          for (const auto& [e, w] : freq) {
            outcomes.push_back(e);
            weights.push_back(w);
          }
        } else {
          for (EntityId e : distinct)
            if (!excluded(e)) outcomes.push_back(e);
          if (!outcomes.empty()) {
            const auto query = aggregate(model, tr.head, tr.relation);
            weights = hard_negative_softmax_probs(query, outcomes, model).probs;
          }
        }
        if (outcomes.empty()) continue;
        const DiscreteSampler draw(weights);
        Rng rng(derive_seed(seed, k, b, i));
        ws.run(idx, tr.head, cap);
        for (std::size_t j = 0; j < k; ++j) {
          const EntityId neg = outcomes[draw.sample(rng)];
          const bool is_false = missing.contains(tr.head, tr.relation, neg);
          const auto d = ws.distance(neg);
          const int bucket = d.has_value() ? std::min(*d, cap) : cap;
          ++acc.total;
          if (is_false) ++acc.false_count;
          ++acc.hist[(is_false ? 1 : 0) * buckets + static_cast<std::size_t>(bucket)];
        }
      }
    });

    FalseNegCountRow row{k, sampler, 0, 0};
    for (const auto& p : partial) {
      row.false_count += p.false_count;
      row.total_count += p.total;
      for (std::size_t i = 0; i < hist.size(); ++i) hist[i] += p.hist[i];
    }
    report.counts.push_back(row);
  }

  for (int label = 0; label < 2; ++label) {
    for (std::size_t bucket = 0; bucket < buckets; ++bucket) {
      report.histogram.push_back(FalseNegHistRow{sampler, label == 1, static_cast<int>(bucket),
                                                 hist[static_cast<std::size_t>(label) * buckets + bucket]});
    }
  }
  return report;
}

}  // namespace kge
