#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "taso/tensor/matrix.hpp"

namespace taso {

/// Per-entry nonnegative importance scores for one weight matrix.
struct ImportanceMap {
  Matrix scores;
  std::size_t sample_count = 0;
};

/// 0/1 matrix marking the ceil(k N) highest-scoring entries.
struct BinaryMask {
  Matrix bits;
  double k = 1.0;

  std::size_t count_ones() const;
};

struct Density {
  std::vector<double> row;  // mean of mask bits along each row
  std::vector<double> col;  // mean of mask bits along each column
};

/// Rows and columns a structured adapter may update.
struct CoreRegion {
  std::vector<std::size_t> rows;  // sorted ascending
  std::vector<std::size_t> cols;  // sorted ascending
  double p_fraction = 1.0;

  std::size_t size() const noexcept { return rows.size() + cols.size(); }
  bool contains_row(std::size_t i) const;
  bool contains_col(std::size_t j) const;
  friend bool operator==(const CoreRegion&, const CoreRegion&) = default;
};

/// ceil(fraction * n), treating products within 1e-9 of an integer as that
/// integer, clamped to [1, n].
std::size_t fraction_count(double fraction, std::size_t n);

BinaryMask topk_mask(const ImportanceMap& importance, double k);
Density density(const BinaryMask& mask);
CoreRegion select_core_region(std::span<const double> row_density,
                              std::span<const double> col_density, double p_fraction);
CoreRegion select_core_region(const Density& d, double p_fraction);

// Region text file: "rows: i1,i2,...\ncols: j1,j2,...\n"
void write_region_file(const std::filesystem::path& path, const CoreRegion& region);
CoreRegion read_region_file(const std::filesystem::path& path);

}  // namespace taso
