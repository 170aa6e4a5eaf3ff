// SPDX-License-Identifier: Apache-2.0
#include "kge/rng.hpp"

#include <algorithm>

#include "kge/common.hpp"

namespace kge {

DiscreteSampler::DiscreteSampler(std::span<const double> weights) {
  cdf_.reserve(weights.size());
  double acc = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("DiscreteSampler: negative or NaN weight");
    acc += w;
    cdf_.push_back(acc);
  }
  total_ = acc;
}

double DiscreteSampler::probability(std::size_t i) const {
  if (empty()) return 0.0;
  const double lo = i == 0 ? 0.0 : cdf_[i - 1];
  return (cdf_[i] - lo) / total_;
}

std::size_t DiscreteSampler::sample(Rng& rng) const {
  if (empty()) throw Error("DiscreteSampler: sampling from an empty distribution");
  const double u = rng.uniform() * total_;
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  // Skip zero-weight outcomes that share the CDF value.
  std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
  while (i > 0 && probability(i) == 0.0) --i;
  return i;
}

}  // namespace kge
