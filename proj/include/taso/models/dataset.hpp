#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "taso/tensor/matrix.hpp"

namespace taso {

/// Examples along rows. For classification `targets` is n x 1 holding class
/// indices; for regression it is n x outputs.
struct Dataset {
  Matrix features;
  Matrix targets;

  std::size_t size() const noexcept { return features.rows(); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Consecutive batches of `batch_size` rows (the last one may be short).
/// batch_size == 0 means one full batch.
std::vector<Dataset> make_batches(const Dataset& data, std::size_t batch_size);

}  // namespace taso
