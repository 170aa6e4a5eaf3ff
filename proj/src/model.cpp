// SPDX-License-Identifier: Apache-2.0
#include "kge/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kge/kernels.hpp"
#include "kge/rng.hpp"

namespace kge {

std::string_view to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::Gru:
      return "GRU";
    case AggregatorKind::Sum:
      return "SUM";
    case AggregatorKind::Mlp:
      return "MLP";
  }
  return "?";
}

AggregatorKind parse_aggregator_kind(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "GRU") return AggregatorKind::Gru;
  if (upper == "SUM") return AggregatorKind::Sum;
  if (upper == "MLP") return AggregatorKind::Mlp;
  throw Error("unknown aggregator kind '" + std::string(name) + "' (expected GRU, SUM or MLP)");
}

std::size_t AggregatorParams::parameter_count(AggregatorKind kind, std::size_t dim) {
  switch (kind) {
    case AggregatorKind::Gru:
      return 3 * (2 * dim * dim + dim);
    case AggregatorKind::Sum:
      return 0;
    case AggregatorKind::Mlp:
      return 2 * dim * dim + dim;
  }
  return 0;
}

EmbeddingModel::EmbeddingModel(std::size_t entity_count, std::size_t relation_count, std::size_t dim,
                               AggregatorKind kind)
    : entity_count_(entity_count),
      relation_count_(relation_count),
      dim_(dim),
      entities_(entity_count * dim, 0.0),
      relations_(relation_count * dim, 0.0) {
  if (dim == 0) throw Error("EmbeddingModel: dimension must be >= 1");
  aggregator_.kind = kind;
  aggregator_.dim = dim;
  aggregator_.values.assign(AggregatorParams::parameter_count(kind, dim), 0.0);
}

void EmbeddingModel::check_entity(EntityId e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= entity_count_)
    throw Error("entity id " + std::to_string(e) + " out of range [0, " + std::to_string(entity_count_) + ")");
}

void EmbeddingModel::check_relation(RelationId r) const {
  if (r < 0 || static_cast<std::size_t>(r) >= relation_count_)
    throw Error("relation id " + std::to_string(r) + " out of range [0, " + std::to_string(relation_count_) + ")");
}

std::span<const double> EmbeddingModel::entity(EntityId e) const {
  check_entity(e);
  return {entities_.data() + static_cast<std::size_t>(e) * dim_, dim_};
}
std::span<double> EmbeddingModel::entity(EntityId e) {
  check_entity(e);
  return {entities_.data() + static_cast<std::size_t>(e) * dim_, dim_};
}
std::span<const double> EmbeddingModel::relation(RelationId r) const {
  check_relation(r);
  return {relations_.data() + static_cast<std::size_t>(r) * dim_, dim_};
}
std::span<double> EmbeddingModel::relation(RelationId r) {
  check_relation(r);
  return {relations_.data() + static_cast<std::size_t>(r) * dim_, dim_};
}

bool EmbeddingModel::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(entities_) && finite(relations_) && finite(aggregator_.values);
}

bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
  return a.entity_count_ == b.entity_count_ && a.relation_count_ == b.relation_count_ && a.dim_ == b.dim_ &&
         a.aggregator_.kind == b.aggregator_.kind && a.entities_ == b.entities_ && a.relations_ == b.relations_ &&
         a.aggregator_.values == b.aggregator_.values;
}

EmbeddingModel init_model(std::size_t entity_count, std::size_t relation_count, std::size_t dim, std::uint64_t seed,
                          double init_scale, AggregatorKind kind) {
  EmbeddingModel model(entity_count, relation_count, dim, kind);
  Rng rng(derive_seed(seed, 0x1417));
  auto fill = [&](std::span<double> values) {
    for (double& x : values) x = init_scale == 0.0 ? 0.0 : rng.uniform(-init_scale, init_scale);
  };
  fill(model.entity_table());
  fill(model.relation_table());
  fill(model.aggregator_values());
  return model;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Offsets into the GRU parameter block for gate g in {0: update, 1: reset, 2: candidate}.
struct GruLayout {
  std::size_t d;
  std::size_t w(int g) const { return static_cast<std::size_t>(g) * (2 * d * d + d); }
  std::size_t u(int g) const { return w(g) + d * d; }
  std::size_t b(int g) const { return w(g) + 2 * d * d; }
};

// Saved per GRU step: x, h_prev, z, r, n (each d values).
constexpr std::size_t kGruSavedPerStep = 5;

// One GRU cell step:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - z) * n + z * h
void gru_step(const double* params, GruLayout L, const double* x, const double* h_prev, double* saved, double* h_out) {
  const auto& k = kernels::active();
  const std::size_t d = L.d;
  double* sx = saved;
  double* sh = saved + d;
  double* z = saved + 2 * d;
  double* r = saved + 3 * d;
  double* n = saved + 4 * d;
  std::copy(x, x + d, sx);
  std::copy(h_prev, h_prev + d, sh);

  std::copy(params + L.b(0), params + L.b(0) + d, z);
  k.gemv(params + L.w(0), d, d, x, z);
  k.gemv(params + L.u(0), d, d, h_prev, z);
  std::copy(params + L.b(1), params + L.b(1) + d, r);
  k.gemv(params + L.w(1), d, d, x, r);
  k.gemv(params + L.u(1), d, d, h_prev, r);
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
  }
  std::vector<double> gated(d);
  for (std::size_t i = 0; i < d; ++i) gated[i] = r[i] * h_prev[i];
  std::copy(params + L.b(2), params + L.b(2) + d, n);
  k.gemv(params + L.w(2), d, d, x, n);
  k.gemv(params + L.u(2), d, d, gated.data(), n);
  for (std::size_t i = 0; i < d; ++i) {
    n[i] = std::tanh(n[i]);
    h_out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
  }
}

// Backward of gru_step. Accumulates parameter gradients into `gparams` and
// writes dL/dx, dL/dh_prev.
void gru_step_backward(const double* params, GruLayout L, const double* saved, const double* grad_h, double* gparams,
                       double* grad_x, double* grad_h_prev) {
  const auto& k = kernels::active();
  const std::size_t d = L.d;
  const double* x = saved;
  const double* h_prev = saved + d;
  const double* z = saved + 2 * d;
  const double* r = saved + 3 * d;
  const double* n = saved + 4 * d;

  std::vector<double> da_z(d), da_r(d), da_n(d), gated(d), grad_gated(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    grad_h_prev[i] = grad_h[i] * z[i];
    const double dn = grad_h[i] * (1.0 - z[i]);
    const double dz = grad_h[i] * (h_prev[i] - n[i]);
    da_n[i] = dn * (1.0 - n[i] * n[i]);
    da_z[i] = dz * z[i] * (1.0 - z[i]);
    gated[i] = r[i] * h_prev[i];
  }
  // candidate
  k.outer_acc(da_n.data(), d, x, d, gparams + L.w(2));
  k.outer_acc(da_n.data(), d, gated.data(), d, gparams + L.u(2));
  k.axpy(1.0, da_n.data(), gparams + L.b(2), d);
  k.gemv_t(params + L.w(2), d, d, da_n.data(), grad_x);
  k.gemv_t(params + L.u(2), d, d, da_n.data(), grad_gated.data());
  for (std::size_t i = 0; i < d; ++i) {
    const double dr = grad_gated[i] * h_prev[i];
    grad_h_prev[i] += grad_gated[i] * r[i];
    da_r[i] = dr * r[i] * (1.0 - r[i]);
  }
  // reset gate
  k.outer_acc(da_r.data(), d, x, d, gparams + L.w(1));
  k.outer_acc(da_r.data(), d, h_prev, d, gparams + L.u(1));
  k.axpy(1.0, da_r.data(), gparams + L.b(1), d);
  k.gemv_t(params + L.w(1), d, d, da_r.data(), grad_x);
  k.gemv_t(params + L.u(1), d, d, da_r.data(), grad_h_prev);
  // update gate
  k.outer_acc(da_z.data(), d, x, d, gparams + L.w(0));
  k.outer_acc(da_z.data(), d, h_prev, d, gparams + L.u(0));
  k.axpy(1.0, da_z.data(), gparams + L.b(0), d);
  k.gemv_t(params + L.w(0), d, d, da_z.data(), grad_x);
  k.gemv_t(params + L.u(0), d, d, da_z.data(), grad_h_prev);
}

}  // namespace

QueryState forward_query(const EmbeddingModel& model, EntityId h, RelationId r) {
  const auto eh = model.entity(h);
  const auto er = model.relation(r);
  const std::size_t d = model.dim();
  QueryState st;
  st.head = h;
  st.relation = r;
  st.output.assign(d, 0.0);
  const double* params = model.aggregator().values.data();
  switch (model.kind()) {
    case AggregatorKind::Sum:
      for (std::size_t i = 0; i < d; ++i) st.output[i] = eh[i] + er[i];
      break;
    case AggregatorKind::Mlp: {
      st.saved.resize(2 * d);
      std::copy(eh.begin(), eh.end(), st.saved.begin());
      std::copy(er.begin(), er.end(), st.saved.begin() + static_cast<std::ptrdiff_t>(d));
      std::copy(params + 2 * d * d, params + 2 * d * d + d, st.output.begin());
      kernels::active().gemv(params, d, 2 * d, st.saved.data(), st.output.data());
      for (double& v : st.output) v = std::tanh(v);
      break;
    }
    case AggregatorKind::Gru: {
      const GruLayout L{d};
      st.saved.resize(2 * kGruSavedPerStep * d);
      std::vector<double> zero(d, 0.0), h1(d);
      gru_step(params, L, eh.data(), zero.data(), st.saved.data(), h1.data());
      gru_step(params, L, er.data(), h1.data(), st.saved.data() + kGruSavedPerStep * d, st.output.data());
      break;
    }
  }
  st.recorded = true;
  return st;
}

std::vector<double> aggregate(const EmbeddingModel& model, EntityId h, RelationId r) {
  return forward_query(model, h, r).output;
}

double score(std::span<const double> query, std::span<const double> tail) {
  if (query.size() != tail.size())
    throw Error("score: dimension mismatch (" + std::to_string(query.size()) + " vs " + std::to_string(tail.size()) +
                ")");
  return kernels::dot(query, tail);
}

void SparseRowGradient::add(std::int32_t id, std::span<const double> grad, double scale) {
  if (grad.size() != dim_) throw Error("SparseRowGradient: gradient size mismatch");
  auto [it, inserted] = slot_.try_emplace(id, ids_.size());
  if (inserted) {
    ids_.push_back(id);
    data_.resize(data_.size() + dim_, 0.0);
  }
  kernels::active().axpy(scale, grad.data(), data_.data() + it->second * dim_, dim_);
}

std::span<const double> SparseRowGradient::row(std::int32_t id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) return {};
  return {data_.data() + it->second * dim_, dim_};
}

std::vector<std::int32_t> SparseRowGradient::touched() const {
  std::vector<std::int32_t> ids = ids_;
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SparseRowGradient::clear() {
  ids_.clear();
  data_.clear();
  slot_.clear();
}

GradientTape::GradientTape(const EmbeddingModel& model)
    : entities(model.dim()), relations(model.dim()), aggregator(model.aggregator().values.size(), 0.0) {}

void GradientTape::clear() {
  entities.clear();
  relations.clear();
  std::fill(aggregator.begin(), aggregator.end(), 0.0);
}

void backward_query(const EmbeddingModel& model, const QueryState& state, std::span<const double> grad_output,
                    GradientTape& tape) {
  if (!state.recorded) throw Error("backward_query: no recorded forward pass for this query");
  const std::size_t d = model.dim();
  if (grad_output.size() != d) throw Error("backward_query: gradient size mismatch");
  if (tape.aggregator.size() != model.aggregator().values.size() || tape.entities.dim() != d)
    throw Error("backward_query: tape shape does not match model");
  const double* params = model.aggregator().values.data();
  switch (model.kind()) {
    case AggregatorKind::Sum:
      tape.entities.add(state.head, grad_output);
      tape.relations.add(state.relation, grad_output);
      break;
    case AggregatorKind::Mlp: {
      std::vector<double> da(d), dx(2 * d, 0.0);
      for (std::size_t i = 0; i < d; ++i) da[i] = grad_output[i] * (1.0 - state.output[i] * state.output[i]);
      const auto& k = kernels::active();
      k.outer_acc(da.data(), d, state.saved.data(), 2 * d, tape.aggregator.data());
      k.axpy(1.0, da.data(), tape.aggregator.data() + 2 * d * d, d);
      k.gemv_t(params, d, 2 * d, da.data(), dx.data());
      tape.entities.add(state.head, std::span<const double>(dx.data(), d));
      tape.relations.add(state.relation, std::span<const double>(dx.data() + d, d));
      break;
    }
    case AggregatorKind::Gru: {
      const GruLayout L{d};
      std::vector<double> grad_er(d, 0.0), grad_h1(d, 0.0), grad_eh(d, 0.0), grad_h0(d, 0.0);
      gru_step_backward(params, L, state.saved.data() + kGruSavedPerStep * d, grad_output.data(),
                        tape.aggregator.data(), grad_er.data(), grad_h1.data());
      gru_step_backward(params, L, state.saved.data(), grad_h1.data(), tape.aggregator.data(), grad_eh.data(),
                        grad_h0.data());
      tape.entities.add(state.head, grad_eh);
      tape.relations.add(state.relation, grad_er);
      break;
    }
  }
}

void backward(const EmbeddingModel& model, const QueryState& state, std::span<const double> grad_query,
              std::span<const EntityGradient> tail_grads, GradientTape& tape) {
  backward_query(model, state, grad_query, tape);
  for (const auto& g : tail_grads) {
    model.check_entity(g.entity);
    tape.entities.add(g.entity, g.grad);
  }
}

namespace {

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.write(bytes, 8);
    }
  }
}

void read_le_doubles(std::istream& in, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double& v : values) {
      unsigned char bytes[8];
      in.read(reinterpret_cast<char*>(bytes), 8);
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
      v = std::bit_cast<double>(bits);
    }
  }
}

CheckpointHeader parse_header(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint " + path.string() + ": missing header");
  std::istringstream hs(line);
  std::string magic, version, kind;
  CheckpointHeader h;
  if (!(hs >> magic >> version >> h.entity_count >> h.relation_count >> h.dim >> kind) || magic != "KGE" ||
      version != "v1")
    throw Error("checkpoint " + path.string() + ": bad header '" + line + "'");
  h.kind = parse_aggregator_kind(kind);
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << "KGE v1 " << model.entity_count() << ' ' << model.relation_count() << ' ' << model.dim() << ' '
      << to_string(model.kind()) << '\n';
  write_le_doubles(out, model.entity_table());
  write_le_doubles(out, model.relation_table());
  write_le_doubles(out, model.aggregator().values);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return parse_header(in, path);
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const CheckpointHeader h = parse_header(in, path);
  EmbeddingModel model(h.entity_count, h.relation_count, h.dim, h.kind);
  read_le_doubles(in, model.entity_table());
  read_le_doubles(in, model.relation_table());
  read_le_doubles(in, model.aggregator_values());
  if (!in) throw Error("checkpoint " + path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint " + path.string() + ": trailing bytes");
  return model;
}

}  // namespace kge
