#include "taso/models/dataset.hpp"

#include <algorithm>
#include <numeric>

namespace taso {

namespace {
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < m.rows(), "subset: row index out of range");
    auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}
}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  return Dataset{gather_rows(features, rows), gather_rows(targets, rows)};
}

std::vector<Dataset> make_batches(const Dataset& data, std::size_t batch_size) {
  require(data.size() > 0, "make_batches: empty dataset");
  if (data.targets.rows() != data.features.rows())
    throw ShapeError("dataset has " + std::to_string(data.features.rows()) + " feature rows but " +
                     std::to_string(data.targets.rows()) + " target rows");
  if (batch_size == 0 || batch_size >= data.size()) return {data};
  std::vector<Dataset> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    out.push_back(data.subset(idx));
  }
  return out;
}

}  // namespace taso
