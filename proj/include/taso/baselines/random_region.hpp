#pragma once

#include <cstddef>
#include <cstdint>

#include "taso/importance/selection.hpp"

namespace taso {

/// Uniform subset of the joint row+column list with the cardinality used by
/// select_core_region.
CoreRegion random_core_region(std::size_t p, std::size_t q, double p_fraction,
                              std::uint64_t seed);

}  // namespace taso
