// SPDX-License-Identifier: Apache-2.0
//
// Straightforward reference implementations used as test oracles. They share
// no code with the library beyond the data types, use plain loops, and make
// no attempt at numerical stabilization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "kge/kg.hpp"
#include "kge/losses.hpp"
#include "kge/model.hpp"
#include "kge/negsampler.hpp"

namespace kge::oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// One GRU step; p is the flat parameter vector, gates laid out z | r | n.
inline std::vector<double> gru_step(const std::vector<double>& p, std::size_t d, const std::vector<double>& x,
                                    const std::vector<double>& h) {
  const std::size_t block = 2 * d * d + d;
  auto W = [&](std::size_t g, std::size_t i, std::size_t j) { return p[g * block + i * d + j]; };
  auto U = [&](std::size_t g, std::size_t i, std::size_t j) { return p[g * block + d * d + i * d + j]; };
  auto b = [&](std::size_t g, std::size_t i) { return p[g * block + 2 * d * d + i]; };
  std::vector<double> z(d), r(d), n(d), out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double az = b(0, i), ar = b(1, i);
    for (std::size_t j = 0; j < d; ++j) {
      az += W(0, i, j) * x[j] + U(0, i, j) * h[j];
      ar += W(1, i, j) * x[j] + U(1, i, j) * h[j];
    }
    z[i] = sigmoid(az);
    r[i] = sigmoid(ar);
  }
  for (std::size_t i = 0; i < d; ++i) {
    double an = b(2, i);
    for (std::size_t j = 0; j < d; ++j) an += W(2, i, j) * x[j] + U(2, i, j) * (r[j] * h[j]);
    n[i] = std::tanh(an);
    out[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
  }
  return out;
}

inline std::vector<double> query(const EmbeddingModel& m, EntityId h, RelationId r) {
  const std::size_t d = m.dim();
  const auto eh = m.entity(h);
  const auto er = m.relation(r);
  std::vector<double> xh(eh.begin(), eh.end()), xr(er.begin(), er.end());
  const auto& p = m.aggregator().values;
  switch (m.kind()) {
    case AggregatorKind::Sum: {
      std::vector<double> out(d);
      for (std::size_t i = 0; i < d; ++i) out[i] = xh[i] + xr[i];
      return out;
    }
    case AggregatorKind::Mlp: {
      std::vector<double> out(d);
      for (std::size_t i = 0; i < d; ++i) {
        double a = p[2 * d * d + i];
        for (std::size_t j = 0; j < d; ++j) a += p[i * 2 * d + j] * xh[j] + p[i * 2 * d + d + j] * xr[j];
        out[i] = std::tanh(a);
      }
      return out;
    }
    case AggregatorKind::Gru: {
      std::vector<double> h0(d, 0.0);
      return gru_step(p, d, xr, gru_step(p, d, xh, h0));
    }
  }
  return {};
}

inline double softmax_nll(double pos, const std::vector<double>& neg) {
  double z = std::exp(pos);
  for (double s : neg) z += std::exp(s);
  return -std::log(std::exp(pos) / z);
}

/// NegHasa straight from its definition.
inline double neg_hasa(const std::vector<double>& neg, const std::vector<double>& structure, const LossConfig& cfg,
                       bool* clamped = nullptr) {
  const double k = static_cast<double>(neg.size());
  auto estimator = [&](const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s1 = 0.0, s2 = 0.0;
    for (double x : xs) {
      s1 += std::exp(x);
      s2 += std::exp(2.0 * x);
    }
    return cfg.variant == DebiasVariant::Eq7 ? s2 / s1 : s1 / static_cast<double>(xs.size());
  };
  const double neg_est = estimator(neg);
  const double fn_est = cfg.tau > 0.0 ? estimator(structure) : 0.0;
  double v = cfg.variant == DebiasVariant::Eq7 ? k * (neg_est - cfg.tau * fn_est) / (1.0 - cfg.tau)
                                               : k * (neg_est / (1.0 - cfg.tau) - cfg.tau * fn_est);
  const double floor = k * cfg.floor_epsilon;
  if (clamped) *clamped = v < floor;
  return std::max(v, floor);
}

/// Batch loss (sum over triples) for any mode, recomputed from scratch.
inline double batch_loss(LossMode mode, const TripleBatch& batch, const NegativeSampleBatch& negs,
                         const EmbeddingModel& m, const LossConfig& cfg, std::size_t* clamp_hits = nullptr) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Triple& t = batch.triples[i];
    const auto& tn = negs.per_triple[i];
    const auto q = query(m, t.head, t.relation);
    const double pos = dot(q, m.entity(t.tail));
    std::vector<double> neg, st;
    for (EntityId e : tn.negatives) neg.push_back(dot(q, m.entity(e)));
    for (EntityId e : tn.structure) st.push_back(dot(q, m.entity(e)));
    if (mode == LossMode::Simple || mode == LossMode::Hard) {
      total += softmax_nll(pos, neg);
      continue;
    }
    bool clamped = false;
    const double nh = neg_hasa(neg, st, cfg, &clamped);
    if (clamped && clamp_hits) ++*clamp_hits;
    total += -std::log(std::exp(pos) / (std::exp(pos) + nh));
    if (mode == LossMode::HasaPlus) {
      std::vector<double> ctx;
      const std::vector<double> et(m.entity(t.tail).begin(), m.entity(t.tail).end());
      for (const auto& [h, r] : tn.contexts) ctx.push_back(dot(query(m, h, r), et));
      total += softmax_nll(pos, ctx);
    }
  }
  return total;
}

/// All-pairs hop distances; -1 = unreachable.
inline std::vector<std::vector<int>> floyd_warshall(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  constexpr int kInf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, kInf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : edges) {
    if (a == b) continue;
    d[a][b] = std::min(d[a][b], 1);
    d[b][a] = std::min(d[b][a], 1);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  for (auto& row : d)
    for (int& x : row)
      if (x >= kInf) x = -1;
  return d;
}

/// Rank by sorting: gold's position among candidates sorted by descending
/// score, with ties between gold and others split as ceil(ties / 2).
inline std::size_t sorted_rank(const std::vector<double>& scores, EntityId gold, const std::vector<bool>& removed) {
  std::vector<std::pair<double, EntityId>> order;
  for (std::size_t e = 0; e < scores.size(); ++e)
    if (!removed[e] || static_cast<EntityId>(e) == gold) order.push_back({scores[e], static_cast<EntityId>(e)});
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a.first > b.first; });
  std::size_t first = 0;
  while (order[first].first > scores[gold]) ++first;
  std::size_t ties = 0;
  for (const auto& [s, e] : order)
    if (s == scores[gold] && e != gold) ++ties;
  return first + 1 + (ties + 1) / 2;
}

}  // namespace kge::oracle
