#include "taso/baselines/random_region.hpp"

#include <algorithm>
#include <numeric>

#include "taso/tensor/errors.hpp"
#include "taso/tensor/random.hpp"

namespace taso {

CoreRegion random_core_region(std::size_t p, std::size_t q, double p_fraction,
                              std::uint64_t seed) {
  require(p_fraction > 0.0 && p_fraction <= 1.0, "random_core_region: p_fraction must lie in (0, 1]");
  require(p > 0 && q > 0, "random_core_region: dimensions must be positive");
  const std::size_t total = p + q;
  const std::size_t take = fraction_count(p_fraction, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `take` slots are a uniform subset.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  CoreRegion region;
  region.p_fraction = p_fraction;
  for (std::size_t i = 0; i < take; ++i) {
    if (order[i] < p)
      region.rows.push_back(order[i]);
    else
      region.cols.push_back(order[i] - p);
  }
  std::sort(region.rows.begin(), region.rows.end());
  std::sort(region.cols.begin(), region.cols.end());
  return region;
}

}  // namespace taso
