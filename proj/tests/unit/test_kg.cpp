// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "kge/kg.hpp"

using namespace kge;
using kge::testing::scratch_dir;

namespace {

std::filesystem::path write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

KnowledgeGraph small_graph() {
  return kge::testing::graph_from({{"a", "r", "b"}, {"b", "r", "c"}, {"a", "s", "c"}, {"c", "s", "d"}},
                                  {{"a", "r", "c"}}, {{"d", "r", "a"}});
}

}  // namespace

TEST_CASE("one-triple file") {
  const auto dir = scratch_dir("kg_one");
  const auto train = write_file(dir / "train.tsv", "a\tr\tb\n");
  const auto empty = write_file(dir / "empty.tsv", "");
  const auto kg = load_dataset(train, empty, empty);
  CHECK(kg.entity_count() == 2);
  CHECK(kg.relation_count() == 1);
  CHECK(kg.train.size() == 1);
  CHECK(kg.valid.empty());
}

TEST_CASE("malformed line reports its line number") {
  const auto dir = scratch_dir("kg_bad");
  const auto bad = write_file(dir / "bad.tsv", "a\tr\n");
  try {
    read_triples_tsv(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("bad.tsv") != std::string::npos);
  }
  const auto bad3 = write_file(dir / "bad3.tsv", "a\tr\tb\n\nx\ty\tz\tw\n");
  try {
    read_triples_tsv(bad3);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("CRLF and blank lines are tolerated") {
  const auto dir = scratch_dir("kg_crlf");
  const auto p = write_file(dir / "t.tsv", "a\tr\tb\r\n\r\nb\tr\tc\r\n");
  const auto rows = read_triples_tsv(p);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][2] == "b");
  CHECK(rows[1][0] == "b");
}

TEST_CASE("missing file is an error") {
  CHECK_THROWS_AS(read_triples_tsv("/nonexistent/kge/train.tsv"), Error);
}

TEST_CASE("ids follow first appearance over train, valid, test") {
  const auto kg = small_graph();
  CHECK(kg.entities.find("a") == 0);
  CHECK(kg.entities.find("b") == 1);
  CHECK(kg.entities.find("c") == 2);
  CHECK(kg.entities.find("d") == 3);
  CHECK(kg.entities.find("zzz") == -1);
  CHECK(kg.relations.find("r") == 0);
  CHECK(kg.relations.find("s") == 1);
}

TEST_CASE("encoded triples decode to their strings") {
  const std::vector<std::array<std::string, 3>> rows = {{"x", "p", "y"}, {"y", "q", "z"}, {"z", "p", "x"}};
  const auto kg = build_graph(rows, {}, {});
  REQUIRE(kg.train.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(kg.entities.name(kg.train[i].head) == rows[i][0]);
    CHECK(kg.relations.name(kg.train[i].relation) == rows[i][1]);
    CHECK(kg.entities.name(kg.train[i].tail) == rows[i][2]);
  }
}

TEST_CASE("duplicates within a split are dropped, across splits kept") {
  const auto kg = kge::testing::graph_from({{"a", "r", "b"}, {"a", "r", "b"}}, {{"a", "r", "b"}});
  CHECK(kg.train.size() == 1);
  CHECK(kg.valid.size() == 1);
  CHECK(kg.duplicates_dropped[0] == 1);
}

TEST_CASE("empty training split is rejected") {
  CHECK_THROWS_AS(build_graph({}, {}, {}), Error);
}

TEST_CASE("known positives cover every split and nothing else") {
  const auto kg = small_graph();
  std::set<Triple> all;
  for (const auto* s : {&kg.train, &kg.valid, &kg.test})
    for (const auto& t : *s) all.insert(t);
  const auto ne = static_cast<EntityId>(kg.entity_count());
  const auto nr = static_cast<RelationId>(kg.relation_count());
  for (EntityId h = 0; h < ne; ++h)
    for (RelationId r = 0; r < nr; ++r)
      for (EntityId t = 0; t < ne; ++t) {
        CHECK(kg.known_positive_tails.contains(h, r, t) == (all.count({h, r, t}) == 1));
        CHECK(kg.train_positive_tails.contains(h, r, t) ==
              (std::find(kg.train.begin(), kg.train.end(), Triple{h, r, t}) != kg.train.end()));
      }
  const auto tails = kg.known_positive_tails.tails(0, 0);
  CHECK(std::is_sorted(tails.begin(), tails.end()));
}

TEST_CASE("augment_reverse on a single triple") {
  const auto kg = augment_reverse(kge::testing::graph_from({{"a", "r", "b"}}));
  CHECK(kg.augmented);
  CHECK(kg.relation_count() == 2);
  REQUIRE(kg.train.size() == 2);
  const RelationId r = kg.relations.find("r");
  const RelationId rr = kg.relations.find("r_reverse");
  REQUIRE(rr >= 0);
  const auto a = kg.entities.find("a"), b = kg.entities.find("b");
  CHECK(std::find(kg.train.begin(), kg.train.end(), Triple{a, r, b}) != kg.train.end());
  CHECK(std::find(kg.train.begin(), kg.train.end(), Triple{b, rr, a}) != kg.train.end());
  CHECK(kg.inverse_relation(r) == rr);
  CHECK(kg.inverse_relation(rr) == r);
}

TEST_CASE("augment_reverse doubles every split and is an involution") {
  const auto base = small_graph();
  const auto kg = augment_reverse(base);
  CHECK(kg.train.size() == 2 * base.train.size());
  CHECK(kg.valid.size() == 2 * base.valid.size());
  CHECK(kg.test.size() == 2 * base.test.size());
  CHECK(kg.relation_count() == 2 * base.relation_count());
  std::set<Triple> all(kg.train.begin(), kg.train.end());
  for (const Triple& t : kg.train) {
    const Triple rev{t.tail, kg.inverse_relation(t.relation), t.head};
    CHECK(all.count(rev) == 1);
    const Triple back{rev.tail, kg.inverse_relation(rev.relation), rev.head};
    CHECK(back == t);
  }
  CHECK(kg.known_positive_tails.contains(kg.entities.find("a"), kg.inverse_relation(0), kg.entities.find("d")));
}

TEST_CASE("augment_reverse twice or with a colliding name fails") {
  const auto kg = augment_reverse(small_graph());
  CHECK_THROWS_AS(augment_reverse(kg), Error);
  const auto clash = kge::testing::graph_from({{"a", "r", "b"}, {"b", "r_reverse", "a"}});
  CHECK_THROWS_AS(augment_reverse(clash), Error);
}

TEST_CASE("make_batches chunks, is seeded and covers every triple once") {
  std::vector<Triple> triples;
  for (int i = 0; i < 10; ++i) triples.push_back({i, 0, (i + 1) % 10});
  const auto b1 = make_batches(triples, 4, 1);
  REQUIRE(b1.size() == 3);
  CHECK(b1[0].size() == 4);
  CHECK(b1[1].size() == 4);
  CHECK(b1[2].size() == 2);
  const auto b2 = make_batches(triples, 4, 1);
  const auto b3 = make_batches(triples, 4, 2);
  std::vector<Triple> o1, o2, o3;
  for (const auto& b : b1) o1.insert(o1.end(), b.triples.begin(), b.triples.end());
  for (const auto& b : b2) o2.insert(o2.end(), b.triples.begin(), b.triples.end());
  for (const auto& b : b3) o3.insert(o3.end(), b.triples.begin(), b.triples.end());
  CHECK(o1 == o2);
  CHECK(o1 != o3);
  std::sort(o1.begin(), o1.end());
  CHECK(o1 == triples);
  CHECK_THROWS_AS(make_batches(triples, 0, 1), Error);
}

TEST_CASE("batch entities list heads then tails") {
  const auto b = TripleBatch::from_triples({{1, 0, 2}, {3, 0, 4}});
  REQUIRE(b.batch_entities.size() == 4);
  CHECK(b.batch_entities == std::vector<EntityId>{1, 3, 2, 4});
}

TEST_CASE("write_triples_tsv round-trips") {
  const auto kg = small_graph();
  const auto dir = scratch_dir("kg_rt");
  write_triples_tsv(dir / "train.tsv", kg.train, kg);
  write_triples_tsv(dir / "valid.tsv", kg.valid, kg);
  write_triples_tsv(dir / "test.tsv", kg.test, kg);
  const auto back = load_dataset(dir / "train.tsv", dir / "valid.tsv", dir / "test.tsv");
  CHECK(back.train == kg.train);
  CHECK(back.valid == kg.valid);
  CHECK(back.test == kg.test);
}
