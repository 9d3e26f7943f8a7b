#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "taso/models/dataset.hpp"
#include "taso/tensor/matrix.hpp"

namespace taso {

struct CsvSchema {
  std::optional<std::size_t> feature_count;  // unset: inferred from the first row
  bool header = false;                       // skip the first line
};

/// Numeric CSV, last column is the label. Parse errors carry the line number.
Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Features then a single label column, 17 significant digits.
void write_csv_dataset(const std::filesystem::path& path, const Dataset& data, bool header = false);

/// Shortest decimal that parses back to exactly `v`.
std::string format_number(double v);

/// Row-major matrix, one row per line, shortest round-trip formatting.
void export_heatmap(const Matrix& m, const std::filesystem::path& path);
Matrix read_csv_matrix(const std::filesystem::path& path, bool header = false);

}  // namespace taso
