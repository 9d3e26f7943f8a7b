#include "taso/tensor/tsr1.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace taso::tsr1 {

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'S', 'R', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & U{0xff});
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("TSR1: truncated stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void write_header(std::ostream& out, DType dtype, std::size_t rows, std::size_t cols) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(2));
  put_le<std::uint64_t>(out, rows);
  put_le<std::uint64_t>(out, cols);
}

}  // namespace

void write(std::ostream& out, const Matrix& m, DType dtype) {
  write_header(out, dtype, m.rows(), m.cols());
  for (double v : m.data()) {
    if (dtype == DType::kFloat64)
      put_le(out, std::bit_cast<std::uint64_t>(v));
    else
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IoError("TSR1: write failed");
}

void write(std::ostream& out, const MatrixF& m) {
  write_header(out, DType::kFloat32, m.rows(), m.cols());
  for (float v : m.data()) put_le(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("TSR1: write failed");
}

Matrix read(std::istream& in, Header* header) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("TSR1: bad magic");
  const auto dtype_code = get_le<std::uint8_t>(in);
  if (dtype_code != 1 && dtype_code != 2)
    throw IoError("TSR1: unknown dtype code " + std::to_string(dtype_code));
  const auto dtype = static_cast<DType>(dtype_code);
  const auto ndim = get_le<std::uint8_t>(in);
  std::vector<std::uint64_t> dims(ndim);
  for (auto& d : dims) d = get_le<std::uint64_t>(in);

  std::uint64_t rows = 1;
  std::uint64_t cols = 1;
  if (ndim == 1) {
    cols = dims[0];
  } else if (ndim >= 2) {
    rows = dims[0];
    for (std::size_t i = 1; i < dims.size(); ++i) cols *= dims[i];
  }
  constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 34;
  if (rows != 0 && cols > kMaxEntries / rows) throw IoError("TSR1: implausible dimensions");

  std::vector<double> data(rows * cols);
  for (auto& v : data) {
    if (dtype == DType::kFloat64)
      v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    else
      v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
  }
  if (header) *header = Header{dtype, std::move(dims)};
  return Matrix(rows, cols, std::move(data));
}

void save(const std::filesystem::path& path, const Matrix& m, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out, m, dtype);
}

Matrix load(const std::filesystem::path& path, Header* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in, header);
}

}  // namespace taso::tsr1
