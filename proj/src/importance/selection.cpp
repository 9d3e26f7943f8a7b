#include "taso/importance/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace taso {

std::size_t BinaryMask::count_ones() const {
  std::size_t n = 0;
  for (double b : bits.data()) n += b != 0.0 ? 1 : 0;
  return n;
}

bool CoreRegion::contains_row(std::size_t i) const {
  return std::binary_search(rows.begin(), rows.end(), i);
}

bool CoreRegion::contains_col(std::size_t j) const {
  return std::binary_search(cols.begin(), cols.end(), j);
}

std::size_t fraction_count(double fraction, std::size_t n) {
  const double exact = fraction * static_cast<double>(n);
  const double nearest = std::round(exact);
  const double count = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest
                                                                                  : std::ceil(exact);
  return std::clamp<std::size_t>(static_cast<std::size_t>(count), 1, n);
}

BinaryMask topk_mask(const ImportanceMap& importance, double k) {
  require(k > 0.0 && k <= 1.0, "topk_mask: k must lie in (0, 1], got " + std::to_string(k));
  const Matrix& s = importance.scores;
  require(!s.empty(), "topk_mask: empty score matrix");
  for (double v : s.data())
    if (!std::isfinite(v)) throw NumericError("topk_mask: non-finite importance score");

  const std::size_t keep = fraction_count(k, s.size());
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&s](std::size_t a, std::size_t b) {
    return s[a] > s[b] || (s[a] == s[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(),
                   before);
  BinaryMask mask{Matrix(s.rows(), s.cols()), k};
  for (std::size_t i = 0; i < keep; ++i) mask.bits[order[i]] = 1.0;
  return mask;
}

Density density(const BinaryMask& mask) {
  const Matrix& b = mask.bits;
  Density d{std::vector<double>(b.rows(), 0.0), std::vector<double>(b.cols(), 0.0)};
  for (std::size_t i = 0; i < b.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const double v = b(i, j);
      if (v != 0.0 && v != 1.0) throw ContractError("density: mask entries must be 0 or 1");
      d.row[i] += v;
      d.col[j] += v;
    }
  }
  for (double& v : d.row) v /= static_cast<double>(b.cols());
  for (double& v : d.col) v /= static_cast<double>(b.rows());
  return d;
}

CoreRegion select_core_region(std::span<const double> row_density,
                              std::span<const double> col_density, double p_fraction) {
  require(p_fraction > 0.0 && p_fraction <= 1.0,
          "select_core_region: p_fraction must lie in (0, 1], got " + std::to_string(p_fraction));
  require(!row_density.empty() && !col_density.empty(), "select_core_region: empty density");

  struct Entry {
    double score;
    int kind;  // 0 = row, 1 = column
    std::size_t index;
  };
  std::vector<Entry> joint;
  joint.reserve(row_density.size() + col_density.size());
  for (std::size_t i = 0; i < row_density.size(); ++i) joint.push_back({row_density[i], 0, i});
  for (std::size_t j = 0; j < col_density.size(); ++j) joint.push_back({col_density[j], 1, j});
  for (const auto& e : joint)
    if (!std::isfinite(e.score)) throw NumericError("select_core_region: non-finite density");

  const std::size_t keep = fraction_count(p_fraction, joint.size());
  auto before = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.index < b.index;
  };
  std::nth_element(joint.begin(), joint.begin() + static_cast<std::ptrdiff_t>(keep - 1), joint.end(),
                   before);

  CoreRegion region;
  region.p_fraction = p_fraction;
  for (std::size_t i = 0; i < keep; ++i)
    (joint[i].kind == 0 ? region.rows : region.cols).push_back(joint[i].index);
  std::sort(region.rows.begin(), region.rows.end());
  std::sort(region.cols.begin(), region.cols.end());
  return region;
}

CoreRegion select_core_region(const Density& d, double p_fraction) {
  return select_core_region(d.row, d.col, p_fraction);
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> parse_indices(const std::string& line, const std::string& key,
                                       const std::filesystem::path& path) {
  const std::string prefix = key + ":";
  if (line.rfind(prefix, 0) != 0)
    throw SchemaError(path.string() + ": expected line starting with '" + prefix + "'");
  std::vector<std::size_t> out;
  std::stringstream ss(line.substr(prefix.size()));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto first = tok.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    tok = tok.substr(first);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw SchemaError(path.string() + ": bad index '" + tok + "'");
    out.push_back(value);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_region_file(const std::filesystem::path& path, const CoreRegion& region) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "rows: " << join(region.rows) << "\n"
      << "cols: " << join(region.cols) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

CoreRegion read_region_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string rows_line;
  std::string cols_line;
  if (!std::getline(in, rows_line) || !std::getline(in, cols_line))
    throw SchemaError(path.string() + ": region file needs a rows line and a cols line");
  CoreRegion region;
  region.rows = parse_indices(rows_line, "rows", path);
  region.cols = parse_indices(cols_line, "cols", path);
  region.p_fraction = 0.0;
  return region;
}

}  // namespace taso
