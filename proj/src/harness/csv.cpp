#include "taso/harness/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "taso/tensor/errors.hpp"

namespace taso {

namespace {

std::vector<double> parse_row(std::string_view line, const std::filesystem::path& path,
                              std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<double> values;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field =
        line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                        std::string(field) + "' as a number");
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return values;
}

struct Rows {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

Rows read_rows(const std::filesystem::path& path, bool header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Rows out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (header && line_no == 1) continue;
    if (line.empty() || line == "\r") continue;
    out.rows.push_back(parse_row(line, path, line_no));
    out.line_numbers.push_back(line_no);
  }
  return out;
}

std::string format(double v, int precision) {
  std::array<char, 64> buf{};
  const auto res = precision > 0
                       ? std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                       std::chars_format::general, precision)
                       : std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_matrix_rows(std::ostream& out, const Matrix& m, int precision) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format(m(i, j), precision);
    }
    out << '\n';
  }
}

}  // namespace

std::string format_number(double v) { return format(v, 0); }

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
  const Rows rows = read_rows(path, schema.header);
  if (rows.rows.empty()) throw SchemaError(path.string() + ": no data rows");
  const std::size_t width = schema.feature_count ? *schema.feature_count + 1 : rows.rows[0].size();
  if (width < 2) throw SchemaError(path.string() + ": need at least one feature and a label");
  Dataset data{Matrix(rows.rows.size(), width - 1), Matrix(rows.rows.size(), 1)};
  for (std::size_t i = 0; i < rows.rows.size(); ++i) {
    const auto& r = rows.rows[i];
    if (r.size() != width)
      throw SchemaError(path.string() + ":" + std::to_string(rows.line_numbers[i]) + ": expected " +
                        std::to_string(width) + " columns, found " + std::to_string(r.size()));
    for (std::size_t j = 0; j + 1 < width; ++j) data.features(i, j) = r[j];
    data.targets(i, 0) = r.back();
  }
  return data;
}

void write_csv_dataset(const std::filesystem::path& path, const Dataset& data, bool header) {
  require(data.features.rows() == data.targets.rows() && data.targets.cols() == 1,
          "write_csv_dataset: expects one label column per example");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (header) {
    for (std::size_t j = 0; j < data.features.cols(); ++j) out << 'x' << j << ',';
    out << "label\n";
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.features.cols(); ++j) out << format(data.features(i, j), 17) << ',';
    out << format(data.targets(i, 0), 17) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void export_heatmap(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix_rows(out, m, 0);
  if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_csv_matrix(const std::filesystem::path& path, bool header) {
  const Rows rows = read_rows(path, header);
  if (rows.rows.empty()) throw SchemaError(path.string() + ": no data rows");
  Matrix m(rows.rows.size(), rows.rows[0].size());
  for (std::size_t i = 0; i < rows.rows.size(); ++i) {
    if (rows.rows[i].size() != m.cols())
      throw SchemaError(path.string() + ":" + std::to_string(rows.line_numbers[i]) +
                        ": ragged row");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows.rows[i][j];
  }
  return m;
}

}  // namespace taso
