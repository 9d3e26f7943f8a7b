#include "taso/lora/adapter.hpp"

#include <cmath>

#include "taso/tensor/kernels.hpp"
#include "taso/tensor/random.hpp"
#include "taso/tensor/tsr1.hpp"

namespace taso {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kRow:
      return "row";
    case Stage::kColumn:
      return "column";
    case Stage::kDense:
      return "dense";
  }
  return "dense";
}

Stage parse_stage(std::string_view name) {
  if (name == "row") return Stage::kRow;
  if (name == "column") return Stage::kColumn;
  if (name == "dense") return Stage::kDense;
  throw ContractError("unknown stage '" + std::string(name) + "'");
}

Matrix SparseLoraModule::masked_left() const {
  return left_mask ? hadamard(left, *left_mask) : left;
}

Matrix SparseLoraModule::masked_right() const {
  return right_mask ? hadamard(right, *right_mask) : right;
}

SparseLoraModule init_dense_adapter(std::size_t p, std::size_t q, std::size_t r,
                                    std::uint64_t seed) {
  require(p > 0 && q > 0, "init_adapter: layer dimensions must be positive");
  require(r >= 1, "init_adapter: rank must be at least 1");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(q));
  SparseLoraModule m;
  m.left = Matrix(p, r);
  m.right = uniform_matrix(r, q, -bound, bound, rng);
  m.stage = Stage::kDense;
  return m;
}

SparseLoraModule init_adapter(std::size_t p, std::size_t q, std::size_t r, Stage stage,
                              const CoreRegion& region, std::uint64_t seed) {
  for (std::size_t i : region.rows) require(i < p, "init_adapter: row index out of range");
  for (std::size_t j : region.cols) require(j < q, "init_adapter: column index out of range");

  SparseLoraModule m = init_dense_adapter(p, q, r, seed);
  m.stage = stage;
  if (stage == Stage::kRow) {
    require(!region.rows.empty(), "init_adapter: row stage needs a non-empty R_core");
    Matrix mask(p, r);
    for (std::size_t i : region.rows)
      for (std::size_t k = 0; k < r; ++k) mask(i, k) = 1.0;
    m.left_mask = std::move(mask);
    m.support = region.rows;
  } else if (stage == Stage::kColumn) {
    require(!region.cols.empty(), "init_adapter: column stage needs a non-empty C_core");
    Matrix mask(r, q);
    for (std::size_t j : region.cols)
      for (std::size_t k = 0; k < r; ++k) mask(k, j) = 1.0;
    m.right_mask = std::move(mask);
    m.support = region.cols;
  }
  m.rho = pruning_ratio(region, stage, p, q);
  return m;
}

Matrix effective_delta(const SparseLoraModule& module) {
  return kernels::matmul(module.masked_left(), module.masked_right());
}

double pruning_ratio(const CoreRegion& region, Stage stage, std::size_t p, std::size_t q) {
  switch (stage) {
    case Stage::kRow:
      return 1.0 - static_cast<double>(region.rows.size()) / static_cast<double>(p);
    case Stage::kColumn:
      return 1.0 - static_cast<double>(region.cols.size()) / static_cast<double>(q);
    case Stage::kDense:
      return 0.0;
  }
  return 0.0;
}

double lr_scale_factor(double rho) {
  require(rho >= 0.0 && rho < 1.0, "pruning ratio must lie in [0, 1), got " + std::to_string(rho));
  return std::sqrt(1.0 / (1.0 - rho));
}

double scaled_lr(double base_lr, double rho) { return base_lr * lr_scale_factor(rho); }

std::size_t count_trainable(Stage stage, std::size_t p, std::size_t q, std::size_t r,
                            std::size_t support_size) {
  switch (stage) {
    case Stage::kRow:
      return support_size * r + r * q;
    case Stage::kColumn:
      return p * r + r * support_size;
    case Stage::kDense:
      return p * r + r * q;
  }
  return 0;
}

std::size_t count_trainable(const SparseLoraModule& module) {
  auto live = [](const Matrix& factor, const std::optional<Matrix>& mask) {
    if (!mask) return factor.size();
    std::size_t n = 0;
    for (double b : mask->data()) n += b != 0.0 ? 1 : 0;
    return n;
  };
  return live(module.left, module.left_mask) + live(module.right, module.right_mask);
}

void save_adapter(const std::filesystem::path& dir, const SparseLoraModule& module,
                  const CoreRegion& region) {
  std::filesystem::create_directories(dir);
  tsr1::save(dir / "left.tsr", module.left);
  tsr1::save(dir / "right.tsr", module.right);
  if (module.left_mask && module.right_mask) {
    tsr1::save(dir / "left_mask.tsr", *module.left_mask);
    tsr1::save(dir / "right_mask.tsr", *module.right_mask);
  } else if (module.left_mask) {
    tsr1::save(dir / "mask.tsr", *module.left_mask);
  } else if (module.right_mask) {
    tsr1::save(dir / "mask.tsr", *module.right_mask);
  }
  write_region_file(dir / "region.txt", region);
}

}  // namespace taso
