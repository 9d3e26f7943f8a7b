#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "taso/importance/selection.hpp"
#include "taso/tensor/matrix.hpp"

namespace taso {

enum class Stage { kRow, kColumn, kDense };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

/// Rank-r LoRA factor pair delta = (left ⊙ left_mask) · (right ⊙ right_mask).
///
/// left is p x r and carries output rows, right is r x q and carries input
/// columns. A row-stage adapter masks rows of `left` outside R_core, so the
/// delta is zero on those rows; a column-stage adapter masks columns of
/// `right` outside C_core. Dense adapters carry no structural mask, but IMP
/// installs arbitrary elementwise masks on both factors. Masks are constant
/// during training.
struct SparseLoraModule {
  Matrix left;
  Matrix right;
  Stage stage = Stage::kDense;
  std::optional<Matrix> left_mask;
  std::optional<Matrix> right_mask;
  std::vector<std::size_t> support;  // R_core (row) or C_core (column)
  double rho = 0.0;

  std::size_t rank() const noexcept { return left.cols(); }
  std::size_t out_features() const noexcept { return left.rows(); }
  std::size_t in_features() const noexcept { return right.cols(); }

  Matrix masked_left() const;
  Matrix masked_right() const;
};

/// left = 0; right ~ U(-1/sqrt(q), 1/sqrt(q)) from `seed`.
SparseLoraModule init_adapter(std::size_t p, std::size_t q, std::size_t r, Stage stage,
                              const CoreRegion& region, std::uint64_t seed);
SparseLoraModule init_dense_adapter(std::size_t p, std::size_t q, std::size_t r,
                                    std::uint64_t seed);

Matrix effective_delta(const SparseLoraModule& module);

/// Fraction of delta entries forced to zero by the stage's structural mask.
double pruning_ratio(const CoreRegion& region, Stage stage, std::size_t p, std::size_t q);

/// base_lr * sqrt(1 / (1 - rho))
double scaled_lr(double base_lr, double rho);
double lr_scale_factor(double rho);

/// Unmasked entries of both factors.
std::size_t count_trainable(const SparseLoraModule& module);
std::size_t count_trainable(Stage stage, std::size_t p, std::size_t q, std::size_t r,
                            std::size_t support_size);

// left.tsr, right.tsr, mask.tsr (if any) and region.txt under `dir`.
void save_adapter(const std::filesystem::path& dir, const SparseLoraModule& module,
                  const CoreRegion& region);

}  // namespace taso
