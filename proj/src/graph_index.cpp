// SPDX-License-Identifier: Apache-2.0
#include "kge/graph_index.hpp"

#include <algorithm>

namespace kge {

StructureIndex::StructureIndex(std::size_t entity_count, std::span<const Triple> triples) {
  std::vector<std::vector<EntityId>> adj(entity_count);
  for (const Triple& t : triples) {
    if (t.head == t.tail) continue;
    if (t.head < 0 || t.tail < 0 || static_cast<std::size_t>(t.head) >= entity_count ||
        static_cast<std::size_t>(t.tail) >= entity_count)
      throw Error("StructureIndex: entity id out of range");
    adj[static_cast<std::size_t>(t.head)].push_back(t.tail);
    adj[static_cast<std::size_t>(t.tail)].push_back(t.head);
  }
  offsets_.assign(entity_count + 1, 0);
  for (std::size_t v = 0; v < entity_count; ++v) {
    auto& list = adj[v];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    offsets_[v + 1] = offsets_[v] + list.size();
  }
  neighbors_.reserve(offsets_.back());
  for (const auto& list : adj) neighbors_.insert(neighbors_.end(), list.begin(), list.end());
}

double StructureIndex::average_degree() const {
  const std::size_t n = entity_count();
  return n == 0 ? 0.0 : static_cast<double>(neighbors_.size()) / static_cast<double>(n);
}

void StructureIndex::check_id(EntityId v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= entity_count())
    throw Error("StructureIndex: entity id " + std::to_string(v) + " out of range");
}

std::span<const EntityId> StructureIndex::neighbors(EntityId v) const {
  check_id(v);
  const auto i = static_cast<std::size_t>(v);
  return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

bool StructureIndex::has_edge(EntityId a, EntityId b) const {
  const auto n = neighbors(a);
  return std::binary_search(n.begin(), n.end(), b);
}

StructureIndex build_structure_index(const KnowledgeGraph& kg) {
  return StructureIndex(kg.entity_count(), kg.train);
}

std::uint32_t BfsWorkspace::next_stamp() {
  if (++current_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    current_ = 1;
  }
  return current_;
}

void BfsWorkspace::run(const StructureIndex& idx, EntityId source, int cap) {
  idx.check_id(source);
  if (stamp_.size() != idx.entity_count()) {
    stamp_.assign(idx.entity_count(), 0);
    dist_.assign(idx.entity_count(), 0);
    current_ = 0;
  }
  const std::uint32_t s = next_stamp();
  order_.clear();
  order_.push_back(source);
  stamp_[static_cast<std::size_t>(source)] = s;
  dist_[static_cast<std::size_t>(source)] = 0;
  for (std::size_t head = 0; head < order_.size(); ++head) {
    const EntityId u = order_[head];
    const int du = dist_[static_cast<std::size_t>(u)];
    if (du >= cap) continue;
    for (EntityId v : idx.neighbors(u)) {
      const auto vi = static_cast<std::size_t>(v);
      if (stamp_[vi] == s) continue;
      stamp_[vi] = s;
      dist_[vi] = du + 1;
      order_.push_back(v);
    }
  }
}

std::optional<int> BfsWorkspace::distance(EntityId v) const {
  const auto vi = static_cast<std::size_t>(v);
  if (v < 0 || vi >= stamp_.size()) throw Error("BfsWorkspace: entity id out of range");
  if (current_ == 0 || stamp_[vi] != current_) return std::nullopt;
  return dist_[vi];
}

std::optional<int> BfsWorkspace::shortest_path(const StructureIndex& idx, EntityId source, EntityId target,
                                               int cap) {
  idx.check_id(source);
  idx.check_id(target);
  if (source == target) return 0;
  if (stamp_.size() != idx.entity_count()) {
    stamp_.assign(idx.entity_count(), 0);
    dist_.assign(idx.entity_count(), 0);
    current_ = 0;
  }
  const std::uint32_t s = next_stamp();
  order_.clear();
  order_.push_back(source);
  stamp_[static_cast<std::size_t>(source)] = s;
  dist_[static_cast<std::size_t>(source)] = 0;
  for (std::size_t head = 0; head < order_.size(); ++head) {
    const EntityId u = order_[head];
    const int du = dist_[static_cast<std::size_t>(u)];
    if (du >= cap) break;  // BFS order: every later node is at least this far
    for (EntityId v : idx.neighbors(u)) {
      const auto vi = static_cast<std::size_t>(v);
      if (stamp_[vi] == s) continue;
      if (v == target) return du + 1;
      stamp_[vi] = s;
      dist_[vi] = du + 1;
      order_.push_back(v);
    }
  }
  return std::nullopt;
}

std::optional<int> shortest_path_length(const StructureIndex& idx, EntityId h, EntityId t, int cap) {
  if (cap < 1) throw Error("shortest_path_length: cap must be >= 1");
  BfsWorkspace ws(idx.entity_count());
  return ws.shortest_path(idx, h, t, cap);
}

Neighborhoods two_hop_neighborhoods(const StructureIndex& idx, EntityId h) {
  idx.check_id(h);
  Neighborhoods nb;
  const auto first = idx.neighbors(h);
  nb.n1.assign(first.begin(), first.end());
  for (EntityId u : first) {
    for (EntityId w : idx.neighbors(u)) {
      if (w == h || std::binary_search(first.begin(), first.end(), w)) continue;
      nb.n2.push_back(w);
    }
  }
  std::sort(nb.n2.begin(), nb.n2.end());
  nb.n2.erase(std::unique(nb.n2.begin(), nb.n2.end()), nb.n2.end());
  return nb;
}

AlphaDistribution::AlphaDistribution(const Neighborhoods& nb) {
  support_.reserve(nb.n1.size() + nb.n2.size());
  std::merge(nb.n1.begin(), nb.n1.end(), nb.n2.begin(), nb.n2.end(), std::back_inserter(support_));
}

double AlphaDistribution::probability(EntityId e) const {
  if (support_.empty() || !std::binary_search(support_.begin(), support_.end(), e)) return 0.0;
  return 1.0 / static_cast<double>(support_.size());
}

EntityId AlphaDistribution::sample(Rng& rng) const {
  if (support_.empty()) throw Error("AlphaDistribution: empty support");
  return support_[static_cast<std::size_t>(rng.below(support_.size()))];
}

AlphaDistribution alpha_distribution(const StructureIndex& idx, EntityId h) {
  return AlphaDistribution(two_hop_neighborhoods(idx, h));
}

NeighborhoodCache::NeighborhoodCache(const StructureIndex& idx, std::size_t capacity)
    : idx_(&idx), capacity_(std::max<std::size_t>(capacity, 1)) {}

std::shared_ptr<const Neighborhoods> NeighborhoodCache::get(EntityId h) {
  {
    std::lock_guard lock(mutex_);
    auto it = map_.find(h);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      ++hits_;
      return it->second->second;
    }
    ++misses_;
  }
  // Computed outside the lock; a concurrent miss on the same head computes
  // the same value twice and the second insert is dropped.
  auto value = std::make_shared<const Neighborhoods>(two_hop_neighborhoods(*idx_, h));
  std::lock_guard lock(mutex_);
  auto it = map_.find(h);
  if (it != map_.end()) return it->second->second;
  lru_.emplace_front(h, value);
  map_[h] = lru_.begin();
  if (lru_.size() > capacity_) {
    map_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return value;
}

std::size_t NeighborhoodCache::size() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}
std::size_t NeighborhoodCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}
std::size_t NeighborhoodCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

}  // namespace kge
