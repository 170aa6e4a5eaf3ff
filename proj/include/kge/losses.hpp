// SPDX-License-Identifier: Apache-2.0
//
// Contrastive losses: InfoNCE over sampled negatives, the hardness- and
// structure-aware debiased variant and its bi-directional extension.
//
// Each loss is split into a score-level term (loss and dL/dscore for one
// triple, numerically stabilized) and a batch driver that evaluates the
// model and chains dL/dscore back through the tables and the aggregator.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "kge/kg.hpp"
#include "kge/model.hpp"
#include "kge/negsampler.hpp"

namespace kge {

enum class DebiasVariant {
  Eq7,   // self-normalized Neg/FalseNeg, NegHasa = K (Neg - tau FalseNeg) / (1 - tau)
  Alg1,  // plain means, NegHasa = K (Neg / (1 - tau) - tau FalseNeg)
};

std::string_view to_string(DebiasVariant v);
DebiasVariant parse_debias_variant(std::string_view name);

struct LossConfig {
  double tau = 0.0;  // prior probability that a hard negative is a fact, in [0, 1)
  std::size_t structure_samples = 4;
  double floor_epsilon = 1e-6;
  DebiasVariant variant = DebiasVariant::Eq7;

  void validate() const;
};

struct LossDiagnostics {
  double pos = 0.0;       // mean exp(e_hr . e_t)
  double neg = 0.0;       // mean Neg estimate
  double false_neg = 0.0; // mean FalseNeg estimate
  double neg_hasa = 0.0;  // mean NegHasa (after clamping)
  std::size_t clamp_hits = 0;
  std::size_t triples = 0;
  double mean_k = 0.0;
};

struct LossValue {
  double loss = 0.0;  // summed over the batch
  LossDiagnostics diag;
};

// ---------------------------------------------------------------------------
// Score-level terms

struct InfoNceTerm {
  double loss;
  double grad_pos;
};

/// -log(exp(pos) / (exp(pos) + Σ exp(neg_j))). Writes dL/dneg_j into grad_neg
/// (same length as neg).
InfoNceTerm infonce_term(double pos, std::span<const double> neg, std::span<double> grad_neg);

struct NegativeEstimate {
  double neg = 0.0;
  double false_neg = 0.0;
  double neg_hasa = 0.0;
  bool clamped = false;
};

/// NegHasa from K negative scores and M structure scores.
NegativeEstimate debiased_negative_estimate(std::span<const double> neg_scores,
                                            std::span<const double> structure_scores, const LossConfig& cfg);

/// E[x | nonfact] = E[x] / (1 - tau) - tau / (1 - tau) E[x | fact].
double debiased_expectation(double expectation_all, double expectation_fact, double tau);

struct HasaTerm {
  double loss;
  double grad_pos;
  NegativeEstimate estimate;
};

/// -log(exp(pos) / (exp(pos) + NegHasa)). Writes dL/dneg_j and dL/dstructure_m.
HasaTerm hasa_term(double pos, std::span<const double> neg, std::span<const double> structure,
                   const LossConfig& cfg, std::span<double> grad_neg, std::span<double> grad_structure);

// ---------------------------------------------------------------------------
// Batch losses. When `tape` is non-null, gradients are accumulated into it.

LossValue simple_infonce(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                         GradientTape* tape);
LossValue hard_infonce(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                       GradientTape* tape);
LossValue hasa_loss(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                    const LossConfig& cfg, GradientTape* tape);
LossValue hasa_plus_loss(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                         const LossConfig& cfg, GradientTape* tape);

LossValue compute_loss(LossMode mode, const TripleBatch& batch, const NegativeSampleBatch& negatives,
                       const EmbeddingModel& model, const LossConfig& cfg, GradientTape* tape);

}  // namespace kge
