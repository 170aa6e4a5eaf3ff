// SPDX-License-Identifier: Apache-2.0
//
// Block-structured random knowledge graphs with planted held-out facts.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kge/kg.hpp"

namespace kge {

/// Entities are split into `block_count` blocks. Relation k connects block b
/// to block (b + k) mod block_count: each such ordered pair (self-loops
/// included) is a fact with intra_block_edge_probability, every other pair
/// with inter_block_edge_probability. A missing_fraction of the facts is held
/// out and split evenly into valid and test.
struct SyntheticKGSpec {
  std::size_t block_count = 4;
  std::size_t entities_per_block = 10;
  std::size_t relations = 2;
  double intra_block_edge_probability = 0.5;
  double inter_block_edge_probability = 0.01;
  double missing_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t entity_count() const noexcept { return block_count * entities_per_block; }
};

struct SyntheticDataset {
  std::vector<std::array<std::string, 3>> train;
  std::vector<std::array<std::string, 3>> valid;
  std::vector<std::array<std::string, 3>> test;
};

std::string synthetic_entity_name(std::size_t block, std::size_t index);
/// Block of an entity named by synthetic_entity_name.
std::size_t synthetic_block_of(const std::string& name);

SyntheticDataset generate_synthetic(const SyntheticKGSpec& spec);

/// generate_synthetic followed by build_graph (not reverse-augmented).
KnowledgeGraph synthetic_graph(const SyntheticKGSpec& spec);

/// Writes train.tsv, valid.tsv and test.tsv into `dir` (created if needed).
void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data);

}  // namespace kge
