// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "kge/kernels.hpp"
#include "kge/model.hpp"

using namespace kge;

namespace {

const AggregatorKind kKinds[] = {AggregatorKind::Gru, AggregatorKind::Sum, AggregatorKind::Mlp};

void set_row(std::span<double> row, std::initializer_list<double> values) {
  std::copy(values.begin(), values.end(), row.begin());
}

}  // namespace

TEST_CASE("parameter counts per aggregator") {
  CHECK(AggregatorParams::parameter_count(AggregatorKind::Gru, 4) == 3 * (2 * 16 + 4));
  CHECK(AggregatorParams::parameter_count(AggregatorKind::Mlp, 4) == 2 * 16 + 4);
  CHECK(AggregatorParams::parameter_count(AggregatorKind::Sum, 4) == 0);
  CHECK(parse_aggregator_kind("GRU") == AggregatorKind::Gru);
  CHECK(parse_aggregator_kind("mlp") == AggregatorKind::Mlp);
  CHECK_THROWS_AS(parse_aggregator_kind("lstm"), Error);
}

TEST_CASE("init is seeded, bounded and zero at scale 0") {
  const auto a = init_model(10, 3, 5, 1, 0.1);
  const auto b = init_model(10, 3, 5, 1, 0.1);
  const auto c = init_model(10, 3, 5, 2, 0.1);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double x : a.entity_table()) CHECK(std::abs(x) <= 0.1);
  const auto z = init_model(4, 2, 3, 1, 0.0);
  for (double x : z.entity_table()) CHECK(x == 0.0);
  for (double x : z.aggregator().values) CHECK(x == 0.0);
}

TEST_CASE("SUM adds the two embeddings") {
  EmbeddingModel m(1, 1, 2, AggregatorKind::Sum);
  set_row(m.entity(0), {1, 0});
  set_row(m.relation(0), {0, 1});
  CHECK(aggregate(m, 0, 0) == std::vector<double>{1, 1});
}

TEST_CASE("GRU with zero parameters outputs zero") {
  EmbeddingModel m(2, 1, 3, AggregatorKind::Gru);
  set_row(m.entity(0), {0.3, -0.2, 0.9});
  set_row(m.relation(0), {1.0, 2.0, -1.0});
  for (double x : aggregate(m, 0, 0)) CHECK(x == 0.0);
}

TEST_CASE("GRU hand value with only the candidate bias set") {
  // z = r = 1/2 at both steps and n = tanh(1), so h2 = (3/4) tanh(1).
  EmbeddingModel m(1, 1, 1, AggregatorKind::Gru);
  m.entity(0)[0] = 5.0;
  m.relation(0)[0] = -3.0;
  auto p = m.aggregator_values();
  p[2 * 3 + 2] = 1.0;  // bn
  CHECK(aggregate(m, 0, 0)[0] == doctest::Approx(0.75 * std::tanh(1.0)).epsilon(1e-15));
}

TEST_CASE("aggregate matches the reference loops for every kind") {
  Rng rng(4);
  for (AggregatorKind kind : kKinds) {
    for (int it = 0; it < 20; ++it) {
      const std::size_t d = 1 + rng.below(9);
      const auto m = init_model(6, 3, d, rng.next(), 0.8, kind);
      const auto h = static_cast<EntityId>(rng.below(6));
      const auto r = static_cast<RelationId>(rng.below(3));
      const auto got = aggregate(m, h, r);
      const auto want = oracle::query(m, h, r);
      REQUIRE(got.size() == d);
      for (std::size_t i = 0; i < d; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      CHECK(aggregate(m, h, r) == got);
    }
  }
}

TEST_CASE("score is an inner product") {
  const std::vector<double> a = {1, 0}, b = {0, 1}, c = {1, 2}, e = {3, 4};
  CHECK(score(a, b) == 0.0);
  CHECK(score(c, e) == 11.0);
  CHECK_THROWS_AS(score(a, std::vector<double>{1, 2, 3}), Error);

  Rng rng(8);
  std::vector<double> x(500), y(500), x3(500);
  for (std::size_t i = 0; i < 500; ++i) {
    x[i] = rng.uniform(-1, 1);
    y[i] = rng.uniform(-1, 1);
    x3[i] = 3.0 * x[i];
  }
  long double naive = 0.0L;
  for (std::size_t i = 0; i < 500; ++i) naive += static_cast<long double>(x[i]) * y[i];
  CHECK(std::abs(score(x, y) - static_cast<double>(naive)) <= 1e-10 * std::abs(static_cast<double>(naive)));
  CHECK(score(x3, y) == doctest::Approx(3.0 * score(x, y)).epsilon(1e-12));
}

TEST_CASE("SUM backward passes the upstream gradient to both rows") {
  EmbeddingModel m(2, 1, 2, AggregatorKind::Sum);
  const auto st = forward_query(m, 1, 0);
  GradientTape tape(m);
  const std::vector<double> g = {0.5, -2.0};
  backward_query(m, st, g, tape);
  const auto ge = tape.entities.row(1), gr = tape.relations.row(0);
  CHECK(std::vector<double>(ge.begin(), ge.end()) == g);
  CHECK(std::vector<double>(gr.begin(), gr.end()) == g);
  CHECK(tape.entities.row(0).empty());
}

TEST_CASE("zero upstream gradient accumulates zero") {
  const auto m = init_model(3, 2, 4, 3, 0.5, AggregatorKind::Gru);
  const auto st = forward_query(m, 0, 1);
  GradientTape tape(m);
  backward_query(m, st, std::vector<double>(4, 0.0), tape);
  for (double x : tape.aggregator) CHECK(x == 0.0);
  for (double x : tape.entities.row(0)) CHECK(x == 0.0);
}

TEST_CASE("backward of a linear probe matches finite differences") {
  // L = <c, g(e_h, e_r)> + <u, e_t>
  Rng rng(99);
  for (AggregatorKind kind : kKinds) {
    for (int it = 0; it < 10; ++it) {
      const std::size_t d = 2 + rng.below(7);
      auto m = init_model(5, 2, d, rng.next(), 0.7, kind);
      const EntityId h = 1, t = 3;
      const RelationId r = 1;
      std::vector<double> c(d), u(d);
      for (auto& x : c) x = rng.uniform(-1, 1);
      for (auto& x : u) x = rng.uniform(-1, 1);
      auto loss = [&] { return oracle::dot(c, oracle::query(m, h, r)) + oracle::dot(u, m.entity(t)); };

      const auto st = forward_query(m, h, r);
      GradientTape tape(m);
      const std::vector<EntityGradient> tails = {{t, u}};
      backward(m, st, c, tails, tape);

      auto fd = [&](std::span<double> params) {
        std::vector<double> out(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double s = params[i];
          params[i] = s + 1e-5;
          const double up = loss();
          params[i] = s - 1e-5;
          const double dn = loss();
          params[i] = s;
          out[i] = (up - dn) / 2e-5;
        }
        return out;
      };
      std::vector<double> ent_an(m.entity_table().size(), 0.0), rel_an(m.relation_table().size(), 0.0);
      for (auto id : tape.entities.touched()) {
        const auto row = tape.entities.row(id);
        std::copy(row.begin(), row.end(), ent_an.begin() + id * static_cast<std::ptrdiff_t>(d));
      }
      for (auto id : tape.relations.touched()) {
        const auto row = tape.relations.row(id);
        std::copy(row.begin(), row.end(), rel_an.begin() + id * static_cast<std::ptrdiff_t>(d));
      }
      CHECK(kge::testing::relative_error(fd(m.entity_table()), ent_an) < 1e-6);
      CHECK(kge::testing::relative_error(fd(m.relation_table()), rel_an) < 1e-6);
      if (kind != AggregatorKind::Sum)
        CHECK(kge::testing::relative_error(fd(m.aggregator_values()), tape.aggregator) < 1e-6);
    }
  }
}

TEST_CASE("backward rejects unrecorded states and bad shapes") {
  const auto m = init_model(3, 1, 2, 1, 0.5);
  GradientTape tape(m);
  QueryState blank;
  CHECK_THROWS_AS(backward_query(m, blank, std::vector<double>(2, 0.0), tape), Error);
  const auto st = forward_query(m, 0, 0);
  CHECK_THROWS_AS(backward_query(m, st, std::vector<double>(3, 0.0), tape), Error);
  CHECK_THROWS_AS(forward_query(m, 5, 0), Error);
}

TEST_CASE("sparse row gradient accumulates and lists touched rows in order") {
  SparseRowGradient g(2);
  const std::vector<double> a = {1, 2};
  g.add(5, a);
  g.add(1, a, 2.0);
  g.add(5, a, -1.0);
  CHECK(g.touched() == std::vector<std::int32_t>{1, 5});
  CHECK(g.row(1)[1] == 4.0);
  CHECK(g.row(5)[0] == 0.0);
  CHECK(g.row(3).empty());
  g.clear();
  CHECK(g.size() == 0);
}

TEST_CASE("checkpoint round-trip and corruption checks") {
  for (AggregatorKind kind : kKinds) {
    const auto dir = kge::testing::scratch_dir("ckpt");
    const auto m = init_model(7, 3, 4, 12, 0.3, kind);
    save_checkpoint(dir / "m.ckpt", m);
    const auto h = read_checkpoint_header(dir / "m.ckpt");
    CHECK(h.entity_count == 7);
    CHECK(h.relation_count == 3);
    CHECK(h.dim == 4);
    CHECK(h.kind == kind);
    CHECK(load_checkpoint(dir / "m.ckpt") == m);

    const auto size = std::filesystem::file_size(dir / "m.ckpt");
    std::filesystem::copy_file(dir / "m.ckpt", dir / "short.ckpt");
    std::filesystem::resize_file(dir / "short.ckpt", size - 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), Error);
    std::filesystem::copy_file(dir / "m.ckpt", dir / "long.ckpt");
    std::ofstream(dir / "long.ckpt", std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), Error);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint\n";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), Error);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), Error);
}

TEST_CASE("forward and backward agree across kernel backends") {
  if (kernels::table_for(kernels::Backend::Avx2) == nullptr) return;
  const auto before = kernels::active().backend;
  const auto m = init_model(6, 2, 13, 21, 0.5, AggregatorKind::Gru);
  const std::vector<double> g(13, 0.25);
  auto run = [&](kernels::Backend b) {
    kernels::select(b);
    const auto st = forward_query(m, 2, 1);
    GradientTape tape(m);
    backward_query(m, st, g, tape);
    return std::make_pair(st.output, tape.aggregator);
  };
  const auto s = run(kernels::Backend::Scalar);
  const auto v = run(kernels::Backend::Avx2);
  kernels::select(before);
  CHECK(kge::testing::relative_error(s.first, v.first) < 1e-13);
  CHECK(kge::testing::relative_error(s.second, v.second) < 1e-13);
}
