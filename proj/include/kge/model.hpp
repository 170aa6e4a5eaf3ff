// SPDX-License-Identifier: Apache-2.0
//
// Entity/relation lookup tables, the query aggregator g(e_h, e_r), dot-product
// scoring, hand-written backward passes and the binary checkpoint format.
#pragma once

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

enum class AggregatorKind { Gru, Sum, Mlp };

std::string_view to_string(AggregatorKind kind);
AggregatorKind parse_aggregator_kind(std::string_view name);

/// Flat parameter vector of the aggregator.
///
/// GRU layout (each W/U is dim x dim row-major, each b has dim entries):
///   Wz Uz bz | Wr Ur br | Wn Un bn
/// MLP layout: W (dim x 2*dim, acting on [e_h; e_r]) then b.
/// SUM has no parameters.
struct AggregatorParams {
  AggregatorKind kind = AggregatorKind::Gru;
  std::size_t dim = 0;
  std::vector<double> values;

  static std::size_t parameter_count(AggregatorKind kind, std::size_t dim);
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(std::size_t entity_count, std::size_t relation_count, std::size_t dim, AggregatorKind kind);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t entity_count() const noexcept { return entity_count_; }
  std::size_t relation_count() const noexcept { return relation_count_; }
  AggregatorKind kind() const noexcept { return aggregator_.kind; }

  std::span<const double> entity(EntityId e) const;
  std::span<double> entity(EntityId e);
  std::span<const double> relation(RelationId r) const;
  std::span<double> relation(RelationId r);

  std::span<const double> entity_table() const noexcept { return entities_; }
  std::span<double> entity_table() noexcept { return entities_; }
  std::span<const double> relation_table() const noexcept { return relations_; }
  std::span<double> relation_table() noexcept { return relations_; }
  const AggregatorParams& aggregator() const noexcept { return aggregator_; }
  std::span<double> aggregator_values() noexcept { return aggregator_.values; }

  bool all_finite() const;
  void check_entity(EntityId e) const;
  void check_relation(RelationId r) const;

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b);

 private:
  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> entities_;
  std::vector<double> relations_;
  AggregatorParams aggregator_;
};

/// Every parameter i.i.d. uniform in [-init_scale, init_scale].
EmbeddingModel init_model(std::size_t entity_count, std::size_t relation_count, std::size_t dim, std::uint64_t seed,
                          double init_scale, AggregatorKind kind = AggregatorKind::Gru);

/// Output of a recorded forward pass of g, with what backward needs.
struct QueryState {
  EntityId head = -1;
  RelationId relation = -1;
  std::vector<double> output;  // e_hr
  std::vector<double> saved;   // kind-specific intermediates
  bool recorded = false;
};

/// e_hr = g(e_h, e_r).
///   GRU: one cell run over the sequence (e_h, e_r) from a zero hidden state.
///   SUM: e_h + e_r.
///   MLP: tanh(W [e_h; e_r] + b).
QueryState forward_query(const EmbeddingModel& model, EntityId h, RelationId r);

std::vector<double> aggregate(const EmbeddingModel& model, EntityId h, RelationId r);

/// Inner product; throws on dimension mismatch.
double score(std::span<const double> query, std::span<const double> tail);

/// Gradient accumulator for lookup-table rows touched in one step.
class SparseRowGradient {
 public:
  explicit SparseRowGradient(std::size_t dim = 0) : dim_(dim) {}

  /// row(id) += scale * grad.
  void add(std::int32_t id, std::span<const double> grad, double scale = 1.0);
  /// Accumulated gradient of `id`, or empty if untouched.
  std::span<const double> row(std::int32_t id) const;
  /// Touched rows in ascending id order.
  std::vector<std::int32_t> touched() const;
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  void clear();

 private:
  std::size_t dim_;
  std::vector<std::int32_t> ids_;
  std::vector<double> data_;
  std::unordered_map<std::int32_t, std::size_t> slot_;
};

struct GradientTape {
  SparseRowGradient entities;
  SparseRowGradient relations;
  std::vector<double> aggregator;

  GradientTape() = default;
  explicit GradientTape(const EmbeddingModel& model);
  void clear();
};

/// Accumulates dL/d(parameters) of g given dL/de_hr for a recorded query.
/// Throws if `state` was not produced by forward_query.
void backward_query(const EmbeddingModel& model, const QueryState& state, std::span<const double> grad_output,
                    GradientTape& tape);

/// Upstream gradient on one entity embedding (a positive or negative tail).
struct EntityGradient {
  EntityId entity;
  std::vector<double> grad;
};

/// Routes upstream gradients w.r.t. e_hr and any tail embeddings into the tape.
void backward(const EmbeddingModel& model, const QueryState& state, std::span<const double> grad_query,
              std::span<const EntityGradient> tail_grads, GradientTape& tape);

// Checkpoint: text header "KGE v1 <|E|> <|R|> <d> <kind>\n" followed by
// little-endian float64 values of the entity table, relation table and
// aggregator parameters (row-major, in that order).
struct CheckpointHeader {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  std::size_t dim = 0;
  AggregatorKind kind = AggregatorKind::Gru;
};

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace kge
