// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion: vocabularies, integer-encoded splits, reverse-relation
// augmentation and seeded batching.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kge/common.hpp"

namespace kge {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Bijection between surface strings and dense ids, in first-appearance order.
class Vocabulary {
 public:
  /// Id of `name`, inserting it if unseen.
  std::int32_t intern(std::string_view name);
  /// Id of `name` or -1.
  std::int32_t find(std::string_view name) const;
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return names_.size(); }
  std::span<const std::string> names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> index_;
};

enum class Split { Train, Valid, Test };

/// Map (head, relation) -> sorted, unique tail ids.
class TailIndex {
 public:
  void build(std::span<const std::vector<Triple>* const> splits);
  /// Sorted tails of (h, r); empty if none.
  std::span<const EntityId> tails(EntityId h, RelationId r) const;
  bool contains(EntityId h, RelationId r, EntityId t) const;
  std::size_t query_count() const noexcept { return map_.size(); }

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(h)) << 32) | static_cast<std::uint32_t>(r);
  }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> map_;
};

struct KnowledgeGraph {
  Vocabulary entities;
  Vocabulary relations;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  /// Positives over train ∪ valid ∪ test (evaluation filtering).
  TailIndex known_positive_tails;
  /// Positives over train only (hard-negative filtering during training).
  TailIndex train_positive_tails;
  /// Duplicate lines dropped per split while loading (train, valid, test).
  std::array<std::size_t, 3> duplicates_dropped{0, 0, 0};
  /// Number of relations before augmentation; equal to relations.size() when
  /// not augmented.
  std::size_t base_relation_count = 0;
  bool augmented = false;

  std::size_t entity_count() const noexcept { return entities.size(); }
  std::size_t relation_count() const noexcept { return relations.size(); }
  const std::vector<Triple>& split(Split s) const;
  std::vector<Triple>& split(Split s);

  /// Inverse relation of r in an augmented graph.
  RelationId inverse_relation(RelationId r) const;

  /// Rebuilds both positive-tail indexes from the current splits.
  void rebuild_indexes();

  /// Throws if any triple's ids fall outside the vocabularies.
  void validate() const;
};

inline constexpr std::string_view kReverseSuffix = "_reverse";

/// Parses a tab-separated "head<TAB>relation<TAB>tail" file into raw string
/// triples. Blank lines are skipped; any other line must have exactly three
/// fields.
std::vector<std::array<std::string, 3>> read_triples_tsv(const std::filesystem::path& path);

/// Loads train/valid/test splits. Ids are assigned in first-appearance order
/// over train, then valid, then test. Duplicates inside a split are dropped
/// and counted.
KnowledgeGraph load_dataset(const std::filesystem::path& train_path, const std::filesystem::path& valid_path,
                            const std::filesystem::path& test_path);

/// Builds a graph from in-memory string triples (same semantics as
/// load_dataset).
KnowledgeGraph build_graph(std::span<const std::array<std::string, 3>> train,
                           std::span<const std::array<std::string, 3>> valid,
                           std::span<const std::array<std::string, 3>> test);

/// Adds (t, r_reverse, h) for every (h, r, t) of every split. Relation r gets
/// inverse r + |R| where |R| is the pre-augmentation count.
KnowledgeGraph augment_reverse(const KnowledgeGraph& kg);

struct TripleBatch {
  std::vector<Triple> triples;
  /// Heads of all triples in batch order, followed by all tails.
  std::vector<EntityId> batch_entities;

  std::size_t size() const noexcept { return triples.size(); }
  static TripleBatch from_triples(std::vector<Triple> triples);
};

/// Shuffles the training split with `seed` and cuts it into consecutive
/// batches; the last batch may be short.
std::vector<TripleBatch> make_batches(const KnowledgeGraph& kg, std::size_t batch_size, std::uint64_t seed);

/// Same, over an arbitrary triple list.
std::vector<TripleBatch> make_batches(std::span<const Triple> triples, std::size_t batch_size, std::uint64_t seed);

/// Writes triples back out as TSV through the vocabularies.
void write_triples_tsv(const std::filesystem::path& path, std::span<const Triple> triples, const KnowledgeGraph& kg);

}  // namespace kge
