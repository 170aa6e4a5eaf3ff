// SPDX-License-Identifier: Apache-2.0
//
// Undirected, unweighted entity graph induced by training triples, with
// truncated BFS distances, 1-/2-hop neighborhoods and the structural
// distribution over entities within two hops of a head.
#pragma once

#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "kge/common.hpp"
#include "kge/kg.hpp"
#include "kge/rng.hpp"

namespace kge {

inline constexpr int kDefaultDistanceCap = 5;

/// CSR adjacency; every neighbor list is sorted and deduplicated.
class StructureIndex {
 public:
  StructureIndex() = default;
  /// One undirected edge per unordered pair {h, t} with h != t.
  StructureIndex(std::size_t entity_count, std::span<const Triple> triples);

  std::size_t entity_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }
  double average_degree() const;
  std::span<const EntityId> neighbors(EntityId v) const;
  bool has_edge(EntityId a, EntityId b) const;
  void check_id(EntityId v) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<EntityId> neighbors_;
};

/// Built from the training split only.
StructureIndex build_structure_index(const KnowledgeGraph& kg);

/// Reusable BFS scratch space (one per thread).
class BfsWorkspace {
 public:
  explicit BfsWorkspace(std::size_t entity_count) : stamp_(entity_count, 0), dist_(entity_count, 0) {}

  /// Distances from `source` to every node within `cap` hops. Afterwards
  /// distance(v) is valid until the next call.
  void run(const StructureIndex& idx, EntityId source, int cap);
  /// Distance from the last source, or nullopt if beyond the cap.
  std::optional<int> distance(EntityId v) const;
  /// Nodes reached by the last run, in BFS order (source first).
  std::span<const EntityId> reached() const noexcept { return order_; }

  /// Early-exit point-to-point query.
  std::optional<int> shortest_path(const StructureIndex& idx, EntityId source, EntityId target, int cap);

 private:
  std::uint32_t next_stamp();
  std::vector<std::uint32_t> stamp_;
  std::vector<int> dist_;
  std::vector<EntityId> order_;
  std::uint32_t current_ = 0;
};

/// d(h, t) if it is at most `cap`, otherwise std::nullopt (unreachable).
std::optional<int> shortest_path_length(const StructureIndex& idx, EntityId h, EntityId t, int cap = kDefaultDistanceCap);

struct Neighborhoods {
  std::vector<EntityId> n1;  // d(h, v) == 1, sorted
  std::vector<EntityId> n2;  // d(h, v) == 2, sorted
};

Neighborhoods two_hop_neighborhoods(const StructureIndex& idx, EntityId h);

/// Uniform distribution over N1(h) ∪ N2(h).
class AlphaDistribution {
 public:
  AlphaDistribution() = default;
  explicit AlphaDistribution(const Neighborhoods& nb);

  bool empty() const noexcept { return support_.empty(); }
  std::span<const EntityId> support() const noexcept { return support_; }
  /// 1 / |support| for members, 0 otherwise.
  double probability(EntityId e) const;
  EntityId sample(Rng& rng) const;

 private:
  std::vector<EntityId> support_;  // sorted
};

AlphaDistribution alpha_distribution(const StructureIndex& idx, EntityId h);

/// Thread-safe LRU cache of per-head neighborhoods.
class NeighborhoodCache {
 public:
  NeighborhoodCache(const StructureIndex& idx, std::size_t capacity);

  std::shared_ptr<const Neighborhoods> get(EntityId h);
  std::size_t size() const;
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  using Entry = std::pair<EntityId, std::shared_ptr<const Neighborhoods>>;
  const StructureIndex* idx_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> lru_;
  std::unordered_map<EntityId, std::list<Entry>::iterator> map_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace kge
