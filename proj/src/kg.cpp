// SPDX-License-Identifier: Apache-2.0
#include "kge/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "kge/rng.hpp"

namespace kge {

std::int32_t Vocabulary::intern(std::string_view name) {
  std::string key(name);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(names_.size());
  names_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::int32_t Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

void TailIndex::build(std::span<const std::vector<Triple>* const> splits) {
  map_.clear();
  for (const auto* split : splits) {
    for (const Triple& t : *split) map_[key(t.head, t.relation)].push_back(t.tail);
  }
  for (auto& [k, tails] : map_) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }
}

std::span<const EntityId> TailIndex::tails(EntityId h, RelationId r) const {
  auto it = map_.find(key(h, r));
  if (it == map_.end()) return {};
  return it->second;
}

bool TailIndex::contains(EntityId h, RelationId r, EntityId t) const {
  const auto ts = tails(h, r);
  return std::binary_search(ts.begin(), ts.end(), t);
}

const std::vector<Triple>& KnowledgeGraph::split(Split s) const {
  switch (s) {
    case Split::Train:
      return train;
    case Split::Valid:
      return valid;
    case Split::Test:
      return test;
  }
  return train;
}

std::vector<Triple>& KnowledgeGraph::split(Split s) {
  return const_cast<std::vector<Triple>&>(static_cast<const KnowledgeGraph&>(*this).split(s));
}

RelationId KnowledgeGraph::inverse_relation(RelationId r) const {
  if (!augmented) throw Error("inverse_relation: graph is not reverse-augmented");
  const auto base = static_cast<RelationId>(base_relation_count);
  if (r < 0 || r >= 2 * base) throw Error("inverse_relation: relation id out of range");
  return r < base ? r + base : r - base;
}

void KnowledgeGraph::rebuild_indexes() {
  const std::vector<Triple>* all[] = {&train, &valid, &test};
  known_positive_tails.build(all);
  const std::vector<Triple>* train_only[] = {&train};
  train_positive_tails.build(train_only);
}

void KnowledgeGraph::validate() const {
  const auto ne = static_cast<EntityId>(entity_count());
  const auto nr = static_cast<RelationId>(relation_count());
  for (const auto* s : {&train, &valid, &test}) {
    for (const Triple& t : *s) {
      if (t.head < 0 || t.head >= ne || t.tail < 0 || t.tail >= ne || t.relation < 0 || t.relation >= nr)
        throw Error("triple id outside vocabulary range");
    }
  }
}

std::vector<std::array<std::string, 3>> read_triples_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path.string());
  std::vector<std::array<std::string, 3>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      parts.push_back(line.substr(start, tab - start));
    }
    parts.push_back(line.substr(start));
    if (parts.size() != 3) {
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields (head, relation, tail), found " + std::to_string(parts.size()));
    }
    std::array<std::string, 3> fields{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(path.string(), line_no, "empty field");
    }
    out.push_back(std::move(fields));
  }
  return out;
}

namespace {

void encode_split(KnowledgeGraph& kg, std::span<const std::array<std::string, 3>> rows, std::vector<Triple>& out,
                  std::size_t& dropped) {
  std::set<Triple> seen;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    Triple t{kg.entities.intern(row[0]), kg.relations.intern(row[1]), kg.entities.intern(row[2])};
    if (!seen.insert(t).second) {
      ++dropped;
      continue;
    }
    out.push_back(t);
  }
}

}  // namespace

KnowledgeGraph build_graph(std::span<const std::array<std::string, 3>> train,
                           std::span<const std::array<std::string, 3>> valid,
                           std::span<const std::array<std::string, 3>> test) {
  if (train.empty()) throw Error("training split is empty");
  KnowledgeGraph kg;
  encode_split(kg, train, kg.train, kg.duplicates_dropped[0]);
  encode_split(kg, valid, kg.valid, kg.duplicates_dropped[1]);
  encode_split(kg, test, kg.test, kg.duplicates_dropped[2]);
  kg.base_relation_count = kg.relations.size();
  kg.rebuild_indexes();
  return kg;
}

KnowledgeGraph load_dataset(const std::filesystem::path& train_path, const std::filesystem::path& valid_path,
                            const std::filesystem::path& test_path) {
  const auto train = read_triples_tsv(train_path);
  if (train.empty()) throw Error("training file has no triples: " + train_path.string());
  const auto valid = read_triples_tsv(valid_path);
  const auto test = read_triples_tsv(test_path);
  return build_graph(train, valid, test);
}

KnowledgeGraph augment_reverse(const KnowledgeGraph& kg) {
  if (kg.augmented) throw Error("augment_reverse: graph is already reverse-augmented");
  KnowledgeGraph out = kg;
  const std::size_t base = kg.relations.size();
  for (std::size_t r = 0; r < base; ++r) {
    const std::string reversed = kg.relations.name(static_cast<RelationId>(r)) + std::string(kReverseSuffix);
    if (kg.relations.find(reversed) >= 0) {
      throw Error("augment_reverse: relation name collision with existing relation '" + reversed + "'");
    }
    const auto id = out.relations.intern(reversed);
    if (static_cast<std::size_t>(id) != base + r) throw Error("augment_reverse: duplicate reverse relation name");
  }
  const auto shift = static_cast<RelationId>(base);
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    auto& triples = out.split(s);
    const std::size_t n = triples.size();
    triples.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const Triple t = triples[i];
      triples.push_back(Triple{t.tail, t.relation + shift, t.head});
    }
  }
  out.base_relation_count = base;
  out.augmented = true;
  out.rebuild_indexes();
  return out;
}

TripleBatch TripleBatch::from_triples(std::vector<Triple> triples) {
  TripleBatch b;
  b.triples = std::move(triples);
  b.batch_entities.reserve(2 * b.triples.size());
  for (const Triple& t : b.triples) b.batch_entities.push_back(t.head);
  for (const Triple& t : b.triples) b.batch_entities.push_back(t.tail);
  return b;
}

std::vector<TripleBatch> make_batches(std::span<const Triple> triples, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw Error("make_batches: batch_size must be >= 1");
  std::vector<Triple> order(triples.begin(), triples.end());
  Rng rng(derive_seed(seed, 0xba7c4));
  rng.shuffle(order);
  std::vector<TripleBatch> batches;
  batches.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.push_back(TripleBatch::from_triples(std::vector<Triple>(order.begin() + begin, order.begin() + end)));
  }
  return batches;
}

std::vector<TripleBatch> make_batches(const KnowledgeGraph& kg, std::size_t batch_size, std::uint64_t seed) {
  return make_batches(std::span<const Triple>(kg.train), batch_size, seed);
}

void write_triples_tsv(const std::filesystem::path& path, std::span<const Triple> triples, const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const Triple& t : triples) {
    out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t' << kg.entities.name(t.tail)
        << '\n';
  }
}

}  // namespace kge
