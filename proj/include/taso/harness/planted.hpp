#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "taso/importance/selection.hpp"
#include "taso/models/dataset.hpp"
#include "taso/models/model.hpp"

namespace taso {

/// Teacher = frozen base with W0 + delta* on one layer. The base model's
/// adapter targets are narrowed to that layer.
struct PlantedTaskSpec {
  std::vector<std::size_t> widths{64, 64};
  Activation hidden_activation = Activation::kRelu;
  LossKind loss = LossKind::kLogitMatch;
  std::size_t layer = 0;
  // Explicit support. When both are empty, ceil(support_fraction (p + q))
  // indices are drawn from the seed, split between rows and columns by
  // row_share.
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  double support_fraction = 0.10;
  double row_share = 0.5;
  // Support magnitudes follow (rank + 1)^-support_power; 0 gives equal weight.
  double support_power = 2.0;
  // ||delta*||_F relative to ||W0||_F.
  double delta_scale = 0.5;
  double input_std = 1.0;
  std::size_t train_count = 1024;
  std::size_t eval_count = 512;
  // Cross-entropy: probability of a uniformly random label. Otherwise:
  // Gaussian target noise std.
  double noise = 0.0;
};

struct PlantedTask {
  TinyModel base;
  TinyModel teacher;
  std::size_t layer = 0;
  CoreRegion support;
  Matrix delta_star;
  Dataset train;
  Dataset eval;
};

/// delta* = u_R v^T + a b_C^T. u and b are zero off the support and carry
/// random signs with power-law magnitudes on it; v and a are standard Gaussian.
/// The row (column) part is omitted when its index set is empty.
PlantedTask generate_planted_task(const PlantedTaskSpec& spec, std::uint64_t seed);

/// Two tasks on the same base and layer with disjoint row and column supports.
struct PlantedPair {
  PlantedTask first;
  PlantedTask second;
};
PlantedPair generate_planted_pair(const PlantedTaskSpec& spec, std::uint64_t seed);

/// Labels (argmax class or raw outputs) of `teacher` on fresh Gaussian inputs.
Dataset sample_teacher(const TinyModel& teacher, std::size_t count, double input_std,
                       double noise, std::uint64_t seed);

}  // namespace taso
