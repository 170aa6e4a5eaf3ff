// SPDX-License-Identifier: Apache-2.0
#include "kge/synthetic.hpp"

#include <cmath>
#include <fstream>

#include "kge/rng.hpp"

namespace kge {

void SyntheticKGSpec::validate() const {
  if (block_count == 0 || entities_per_block == 0) throw Error("synthetic KG needs at least one entity");
  if (relations == 0) throw Error("synthetic KG needs at least one relation");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(intra_block_edge_probability) || !prob(inter_block_edge_probability))
    throw Error("edge probabilities must be in [0, 1]");
  if (!(missing_fraction > 0.0 && missing_fraction < 1.0)) throw Error("missing_fraction must be in (0, 1)");
}

std::string synthetic_entity_name(std::size_t block, std::size_t index) {
  return "b" + std::to_string(block) + "_e" + std::to_string(index);
}

std::size_t synthetic_block_of(const std::string& name) {
  const auto us = name.find('_');
  if (name.size() < 2 || name[0] != 'b' || us == std::string::npos) throw Error("not a synthetic entity: " + name);
  return std::stoul(name.substr(1, us - 1));
}

SyntheticDataset generate_synthetic(const SyntheticKGSpec& spec) {
  spec.validate();
  const std::size_t n = spec.entity_count();
  const std::size_t per = spec.entities_per_block;
  Rng rng(derive_seed(spec.seed, 0x5e7));

  std::vector<std::array<std::string, 3>> facts;
  for (std::size_t k = 0; k < spec.relations; ++k) {
    const std::string rel = "r" + std::to_string(k);
    for (std::size_t h = 0; h < n; ++h) {
      const std::size_t target_block = (h / per + k) % spec.block_count;
      for (std::size_t t = 0; t < n; ++t) {
        const bool planted = t / per == target_block;
        const double p = planted ? spec.intra_block_edge_probability : spec.inter_block_edge_probability;
        if (rng.bernoulli(p))
          facts.push_back({synthetic_entity_name(h / per, h % per), rel, synthetic_entity_name(t / per, t % per)});
      }
    }
  }
  rng.shuffle(std::span(facts));

  const auto held = static_cast<std::size_t>(std::llround(spec.missing_fraction * static_cast<double>(facts.size())));
  if (held >= facts.size()) throw Error("synthetic KG: missing_fraction leaves no training triples");
  SyntheticDataset out;
  const std::size_t n_valid = held / 2;
  out.valid.assign(facts.begin(), facts.begin() + static_cast<std::ptrdiff_t>(n_valid));
  out.test.assign(facts.begin() + static_cast<std::ptrdiff_t>(n_valid), facts.begin() + static_cast<std::ptrdiff_t>(held));
  out.train.assign(facts.begin() + static_cast<std::ptrdiff_t>(held), facts.end());
  return out;
}

KnowledgeGraph synthetic_graph(const SyntheticKGSpec& spec) {
  const auto data = generate_synthetic(spec);
  return build_graph(data.train, data.valid, data.test);
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::vector<std::array<std::string, 3>>& rows) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    for (const auto& r : rows) out << r[0] << '\t' << r[1] << '\t' << r[2] << '\n';
  };
  write("train.tsv", data.train);
  write("valid.tsv", data.valid);
  write("test.tsv", data.test);
}

}  // namespace kge
