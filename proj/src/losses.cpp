// SPDX-License-Identifier: Apache-2.0
#include "kge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "kge/kernels.hpp"

namespace kge {

std::string_view to_string(DebiasVariant v) { return v == DebiasVariant::Eq7 ? "eq7" : "alg1"; }

DebiasVariant parse_debias_variant(std::string_view name) {
  if (name == "eq7" || name == "EQ7") return DebiasVariant::Eq7;
  if (name == "alg1" || name == "ALG1") return DebiasVariant::Alg1;
  throw Error("unknown debias variant '" + std::string(name) + "' (expected eq7 or alg1)");
}

void LossConfig::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) throw Error("tau must lie in [0, 1)");
  if (!(floor_epsilon > 0.0)) throw Error("floor_epsilon must be > 0");
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double max_of(std::span<const double> xs, double init = kNegInf) {
  for (double x : xs) init = std::max(init, x);
  return init;
}

// log Σ exp(scale * x_i)
double log_sum_exp(std::span<const double> xs, double scale) {
  if (xs.empty()) return kNegInf;
  double m = kNegInf;
  for (double x : xs) m = std::max(m, scale * x);
  double s = 0.0;
  for (double x : xs) s += std::exp(scale * x - m);
  return m + std::log(s);
}

// log of the Neg / FalseNeg estimator over `scores`.
double log_estimator(std::span<const double> scores, DebiasVariant v) {
  if (scores.empty()) return kNegInf;
  if (v == DebiasVariant::Eq7) return log_sum_exp(scores, 2.0) - log_sum_exp(scores, 1.0);
  return log_sum_exp(scores, 1.0) - std::log(static_cast<double>(scores.size()));
}

struct Coefficients {
  double neg;    // multiplies Neg
  double false_neg;  // multiplies FalseNeg (subtracted)
};

Coefficients coefficients(const LossConfig& cfg) {
  const double a = 1.0 / (1.0 - cfg.tau);
  const double b = cfg.variant == DebiasVariant::Eq7 ? cfg.tau / (1.0 - cfg.tau) : cfg.tau;
  return {a, b};
}

// Estimator values multiplied by exp(-shift).
struct Scaled {
  double log_neg;
  double log_false_neg;
  double neg;
  double false_neg;
  double neg_hasa;
  bool clamped;
};

Scaled estimate_scaled(std::span<const double> neg, std::span<const double> structure, const LossConfig& cfg,
                       double shift) {
  Scaled s{};
  const auto k = static_cast<double>(neg.size());
  const Coefficients c = coefficients(cfg);
  s.log_neg = log_estimator(neg, cfg.variant);
  s.log_false_neg = log_estimator(structure, cfg.variant);
  s.neg = std::exp(s.log_neg - shift);
  s.false_neg = std::exp(s.log_false_neg - shift);
  s.neg_hasa = k * (c.neg * s.neg - c.false_neg * s.false_neg);
  const double floor = k * cfg.floor_epsilon * std::exp(-shift);
  if (s.neg_hasa < floor) {
    s.neg_hasa = floor;
    s.clamped = true;
  }
  return s;
}

}  // namespace

double debiased_expectation(double expectation_all, double expectation_fact, double tau) {
  return expectation_all / (1.0 - tau) - tau / (1.0 - tau) * expectation_fact;
}

InfoNceTerm infonce_term(double pos, std::span<const double> neg, std::span<double> grad_neg) {
  const double m = max_of(neg, pos);
  const double e_pos = std::exp(pos - m);
  double z = e_pos;
  for (double s : neg) z += std::exp(s - m);
  for (std::size_t j = 0; j < neg.size(); ++j) grad_neg[j] = std::exp(neg[j] - m) / z;
  return {m + std::log(z) - pos, e_pos / z - 1.0};
}

NegativeEstimate debiased_negative_estimate(std::span<const double> neg_scores,
                                            std::span<const double> structure_scores, const LossConfig& cfg) {
  cfg.validate();
  const Scaled s = estimate_scaled(neg_scores, structure_scores, cfg, 0.0);
  return {s.neg, s.false_neg, s.neg_hasa, s.clamped};
}

HasaTerm hasa_term(double pos, std::span<const double> neg, std::span<const double> structure, const LossConfig& cfg,
                   std::span<double> grad_neg, std::span<double> grad_structure) {
  const double shift = max_of(structure, max_of(neg, pos));
  const Scaled s = estimate_scaled(neg, structure, cfg, shift);
  const Coefficients c = coefficients(cfg);
  const double e_pos = std::exp(pos - shift);
  const double denom = e_pos + s.neg_hasa;

  HasaTerm out;
  out.loss = std::log(denom) + shift - pos;
  out.grad_pos = e_pos / denom - 1.0;
  out.estimate = {std::exp(s.log_neg), std::exp(s.log_false_neg),
                  s.neg_hasa * std::exp(shift), s.clamped};

  std::fill(grad_neg.begin(), grad_neg.end(), 0.0);
  std::fill(grad_structure.begin(), grad_structure.end(), 0.0);
  if (s.clamped) return out;

  const auto k = static_cast<double>(neg.size());
  if (cfg.variant == DebiasVariant::Eq7) {
    // d/dx_j [Σ e^{2x} / Σ e^{x}] = w_j (2 e^{x_j} - estimate), w = softmax(x)
    const double lse_neg = log_sum_exp(neg, 1.0);
    for (std::size_t j = 0; j < neg.size(); ++j) {
      const double w = std::exp(neg[j] - lse_neg);
      grad_neg[j] = k * c.neg * w * (2.0 * std::exp(neg[j] - shift) - s.neg) / denom;
    }
    if (c.false_neg != 0.0) {
      const double lse_s = log_sum_exp(structure, 1.0);
      for (std::size_t m = 0; m < structure.size(); ++m) {
        const double w = std::exp(structure[m] - lse_s);
        grad_structure[m] = -k * c.false_neg * w * (2.0 * std::exp(structure[m] - shift) - s.false_neg) / denom;
      }
    }
  } else {
    for (std::size_t j = 0; j < neg.size(); ++j) grad_neg[j] = c.neg * std::exp(neg[j] - shift) / denom;
    if (c.false_neg != 0.0) {
      const auto m_count = static_cast<double>(structure.size());
      for (std::size_t m = 0; m < structure.size(); ++m)
        grad_structure[m] = -k * c.false_neg * std::exp(structure[m] - shift) / (m_count * denom);
    }
  }
  return out;
}

namespace {

// Forward states and accumulated dL/de_hr for every distinct (h, r) of a batch.
class QueryPool {
 public:
  explicit QueryPool(const EmbeddingModel& model) : model_(model) {}

  void add(EntityId h, RelationId r) {
    auto [it, inserted] = index_.try_emplace(key(h, r), states_.size());
    if (inserted) {
      states_.push_back(forward_query(model_, h, r));
      grads_.emplace_back(model_.dim(), 0.0);
    }
  }
  std::size_t at(EntityId h, RelationId r) const { return index_.at(key(h, r)); }
  std::span<const double> query(std::size_t i) const { return states_[i].output; }
  std::span<double> grad(std::size_t i) { return grads_[i]; }

  void backward(GradientTape& tape) const {
    for (std::size_t i = 0; i < states_.size(); ++i) backward_query(model_, states_[i], grads_[i], tape);
  }

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(h)) << 32) | static_cast<std::uint32_t>(r);
  }
  const EmbeddingModel& model_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<QueryState> states_;
  std::vector<std::vector<double>> grads_;
};

enum class Form { InfoNce, Hasa, HasaPlus };

LossValue run_batch(Form form, const TripleBatch& batch, const NegativeSampleBatch& negatives,
                    const EmbeddingModel& model, const LossConfig& cfg, GradientTape* tape) {
  if (negatives.per_triple.size() != batch.size()) throw Error("loss: negatives do not match batch size");
  if (form != Form::InfoNce) cfg.validate();
  const auto& k = kernels::active();
  const std::size_t d = model.dim();

  QueryPool pool(model);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pool.add(batch.triples[i].head, batch.triples[i].relation);
    if (form == Form::HasaPlus)
      for (const auto& [h, r] : negatives.per_triple[i].contexts) pool.add(h, r);
  }

  LossValue value;
  value.diag.triples = batch.size();
  value.diag.mean_k = negatives.mean_k();
  std::vector<double> neg_scores, struct_scores, ctx_scores, g_neg, g_struct, g_ctx, g_tail(d);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Triple& tr = batch.triples[i];
    const TripleNegatives& tn = negatives.per_triple[i];
    const std::size_t qi = pool.at(tr.head, tr.relation);
    const auto q = pool.query(qi);
    const auto e_t = model.entity(tr.tail);
    const double pos = k.dot(q.data(), e_t.data(), d);

    neg_scores.resize(tn.negatives.size());
    for (std::size_t j = 0; j < tn.negatives.size(); ++j)
      neg_scores[j] = k.dot(q.data(), model.entity(tn.negatives[j]).data(), d);
    g_neg.assign(neg_scores.size(), 0.0);

    // With tau = 0 the structure term has zero weight; leaving it out keeps
    // those rows untouched in the tape.
    const bool use_structure = form != Form::InfoNce && cfg.tau > 0.0;
    struct_scores.resize(use_structure ? tn.structure.size() : 0);
    for (std::size_t m = 0; m < struct_scores.size(); ++m)
      struct_scores[m] = k.dot(q.data(), model.entity(tn.structure[m]).data(), d);
    g_struct.assign(struct_scores.size(), 0.0);

    double grad_pos = 0.0;
    if (form == Form::InfoNce) {
      const InfoNceTerm t = infonce_term(pos, neg_scores, g_neg);
      value.loss += t.loss;
      grad_pos = t.grad_pos;
      double sum_exp = 0.0;
      for (double s : neg_scores) sum_exp += std::exp(s);
      value.diag.neg += neg_scores.empty() ? 0.0 : sum_exp / static_cast<double>(neg_scores.size());
      value.diag.neg_hasa += sum_exp;
    } else {
      const HasaTerm t = hasa_term(pos, neg_scores, struct_scores, cfg, g_neg, g_struct);
      value.loss += t.loss;
      grad_pos = t.grad_pos;
      value.diag.neg += t.estimate.neg;
      value.diag.false_neg += t.estimate.false_neg;
      value.diag.neg_hasa += t.estimate.neg_hasa;
      if (t.estimate.clamped) ++value.diag.clamp_hits;
    }
    value.diag.pos += std::exp(pos);

    // Tail-side term: contrast e_t against other queries of the batch.
    double grad_pos_ctx = 0.0;
    if (form == Form::HasaPlus) {
      ctx_scores.resize(tn.contexts.size());
      for (std::size_t j = 0; j < tn.contexts.size(); ++j) {
        const auto& [h, r] = tn.contexts[j];
        ctx_scores[j] = k.dot(e_t.data(), pool.query(pool.at(h, r)).data(), d);
      }
      g_ctx.assign(ctx_scores.size(), 0.0);
      const InfoNceTerm t = infonce_term(pos, ctx_scores, g_ctx);
      value.loss += t.loss;
      grad_pos_ctx = t.grad_pos;
    }

    if (tape == nullptr) continue;
    auto gq = pool.grad(qi);
    const double gp = grad_pos + grad_pos_ctx;
    k.axpy(gp, e_t.data(), gq.data(), d);
    std::fill(g_tail.begin(), g_tail.end(), 0.0);
    k.axpy(gp, q.data(), g_tail.data(), d);
    for (std::size_t j = 0; j < tn.negatives.size(); ++j) {
      k.axpy(g_neg[j], model.entity(tn.negatives[j]).data(), gq.data(), d);
      tape->entities.add(tn.negatives[j], q, g_neg[j]);
    }
    for (std::size_t m = 0; m < struct_scores.size(); ++m) {
      k.axpy(g_struct[m], model.entity(tn.structure[m]).data(), gq.data(), d);
      tape->entities.add(tn.structure[m], q, g_struct[m]);
    }
    if (form == Form::HasaPlus) {
      for (std::size_t j = 0; j < tn.contexts.size(); ++j) {
        const auto& [h, r] = tn.contexts[j];
        const std::size_t ci = pool.at(h, r);
        k.axpy(g_ctx[j], pool.query(ci).data(), g_tail.data(), d);
        k.axpy(g_ctx[j], e_t.data(), pool.grad(ci).data(), d);
      }
    }
    tape->entities.add(tr.tail, g_tail);
  }
  if (tape != nullptr) pool.backward(*tape);

  if (batch.size() > 0) {
    const auto n = static_cast<double>(batch.size());
    value.diag.pos /= n;
    value.diag.neg /= n;
    value.diag.false_neg /= n;
    value.diag.neg_hasa /= n;
  }
  return value;
}

}  // namespace

LossValue simple_infonce(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                         GradientTape* tape) {
  return run_batch(Form::InfoNce, batch, negatives, model, LossConfig{}, tape);
}

LossValue hard_infonce(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                       GradientTape* tape) {
  return run_batch(Form::InfoNce, batch, negatives, model, LossConfig{}, tape);
}

LossValue hasa_loss(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                    const LossConfig& cfg, GradientTape* tape) {
  return run_batch(Form::Hasa, batch, negatives, model, cfg, tape);
}

LossValue hasa_plus_loss(const TripleBatch& batch, const NegativeSampleBatch& negatives, const EmbeddingModel& model,
                         const LossConfig& cfg, GradientTape* tape) {
  return run_batch(Form::HasaPlus, batch, negatives, model, cfg, tape);
}

LossValue compute_loss(LossMode mode, const TripleBatch& batch, const NegativeSampleBatch& negatives,
                       const EmbeddingModel& model, const LossConfig& cfg, GradientTape* tape) {
  switch (mode) {
    case LossMode::Simple:
      return simple_infonce(batch, negatives, model, tape);
    case LossMode::Hard:
      return hard_infonce(batch, negatives, model, tape);
    case LossMode::Hasa:
      return hasa_loss(batch, negatives, model, cfg, tape);
    case LossMode::HasaPlus:
      return hasa_plus_loss(batch, negatives, model, cfg, tape);
  }
  throw Error("compute_loss: unknown mode");
}

}  // namespace kge
