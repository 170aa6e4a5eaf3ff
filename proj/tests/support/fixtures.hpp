// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "kge/losses.hpp"
#include "kge/model.hpp"
#include "kge/negsampler.hpp"
#include "kge/rng.hpp"
#include "oracles.hpp"

namespace kge::testing {

/// A loss evaluation with its negatives frozen.
struct GradInstance {
  LossMode mode = LossMode::Simple;
  LossConfig cfg;
  EmbeddingModel model;
  TripleBatch batch;
  NegativeSampleBatch negs;
};

inline GradInstance random_grad_instance(std::uint64_t seed, LossMode mode, AggregatorKind kind,
                                         DebiasVariant variant = DebiasVariant::Eq7) {
  Rng rng(seed);
  GradInstance g;
  g.mode = mode;
  g.cfg.tau = 0.1;
  g.cfg.variant = variant;
  const std::size_t n_e = 8 + rng.below(13);  // 8..20
  const std::size_t n_r = 2 + rng.below(3);
  const std::size_t d = 2 + rng.below(7);     // 2..8
  g.model = init_model(n_e, n_r, d, rng.next(), 0.6, kind);

  std::vector<Triple> triples;
  const std::size_t b = 2 + rng.below(3);
  for (std::size_t i = 0; i < b; ++i)
    triples.push_back({static_cast<EntityId>(rng.below(n_e)), static_cast<RelationId>(rng.below(n_r)),
                       static_cast<EntityId>(rng.below(n_e))});
  g.batch = TripleBatch::from_triples(triples);

  for (const Triple& t : triples) {
    TripleNegatives tn;
    const std::size_t k = 1 + rng.below(6);
    while (tn.negatives.size() < k) {
      const auto e = static_cast<EntityId>(rng.below(n_e));
      if (e != t.tail) tn.negatives.push_back(e);
    }
    if (mode == LossMode::Hasa || mode == LossMode::HasaPlus)
      for (std::size_t m = 0; m < 4; ++m) tn.structure.push_back(static_cast<EntityId>(rng.below(n_e)));
    if (mode == LossMode::HasaPlus)
      for (const Triple& o : triples)
        if (o.head != t.head || o.relation != t.relation) tn.contexts.push_back({o.head, o.relation});
    g.negs.per_triple.push_back(std::move(tn));
  }
  return g;
}

struct GradCheckResult {
  double entity_error = 0.0;
  double relation_error = 0.0;
  double aggregator_error = 0.0;
  std::size_t clamp_hits = 0;

  double max_error() const { return std::max({entity_error, relation_error, aggregator_error}); }
};

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / scale;
}

/// Central differences of the oracle loss against the library's analytic
/// gradients, one relative error (vector 2-norm) per parameter group.
inline GradCheckResult finite_difference_check(GradInstance g, double step = 1e-5) {
  GradientTape tape(g.model);
  compute_loss(g.mode, g.batch, g.negs, g.model, g.cfg, &tape);
  GradCheckResult out;
  oracle::batch_loss(g.mode, g.batch, g.negs, g.model, g.cfg, &out.clamp_hits);

  const std::size_t d = g.model.dim();
  auto fd = [&](std::span<double> params) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + step;
      const double up = oracle::batch_loss(g.mode, g.batch, g.negs, g.model, g.cfg);
      params[i] = saved - step;
      const double down = oracle::batch_loss(g.mode, g.batch, g.negs, g.model, g.cfg);
      params[i] = saved;
      grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
  };
  auto dense = [&](const SparseRowGradient& rows, std::size_t count) {
    std::vector<double> out(count * d, 0.0);
    for (std::int32_t id : rows.touched()) {
      const auto r = rows.row(id);
      std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(id * d));
    }
    return out;
  };
  out.entity_error = relative_error(fd(g.model.entity_table()), dense(tape.entities, g.model.entity_count()));
  out.relation_error = relative_error(fd(g.model.relation_table()), dense(tape.relations, g.model.relation_count()));
  if (!tape.aggregator.empty())
    out.aggregator_error = relative_error(fd(g.model.aggregator_values()), tape.aggregator);
  return out;
}

/// Builds a graph from (head, relation, tail) name triples.
inline KnowledgeGraph graph_from(const std::vector<std::array<std::string, 3>>& train,
                                 const std::vector<std::array<std::string, 3>>& valid = {},
                                 const std::vector<std::array<std::string, 3>>& test = {}) {
  return build_graph(train, valid, test);
}

/// Undirected random graph as an edge list over n nodes.
inline std::vector<std::pair<int, int>> random_edges(Rng& rng, int n, double p) {
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && rng.bernoulli(p)) edges.push_back({a, b});
  return edges;
}

inline std::vector<Triple> edges_to_triples(const std::vector<std::pair<int, int>>& edges) {
  std::vector<Triple> out;
  for (auto [a, b] : edges) out.push_back({a, 0, b});
  return out;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace kge::testing

namespace kge::testing {

/// Fully planted block graph: relation k sends every entity of block b to
/// every entity of block (b + offsets[k]) mod blocks. Every `holdout`-th
/// triple (in generation order, starting at `phase`) goes to valid.
inline KnowledgeGraph block_graph(std::size_t blocks, std::size_t per_block, const std::vector<std::size_t>& offsets,
                                  std::size_t holdout, std::size_t phase = 0) {
  std::vector<std::array<std::string, 3>> train, valid;
  std::size_t n = 0;
  for (std::size_t k = 0; k < offsets.size(); ++k)
    for (std::size_t h = 0; h < blocks * per_block; ++h)
      for (std::size_t j = 0; j < per_block; ++j) {
        const std::size_t t = ((h / per_block + offsets[k]) % blocks) * per_block + j;
        std::array<std::string, 3> row = {"e" + std::to_string(h), "r" + std::to_string(k), "e" + std::to_string(t)};
        (n++ % holdout == phase ? valid : train).push_back(row);
      }
  return build_graph(train, valid, {});
}

}  // namespace kge::testing
