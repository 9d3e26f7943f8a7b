#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "taso/tensor/matrix.hpp"

// TSR1 binary tensor container:
//   "TSR1" | u8 dtype (1 = f32, 2 = f64) | u8 ndim | ndim x u64 LE dims |
//   row-major LE payload
// Matrices are written with ndim = 2. On read, ndim 1 loads as a 1 x n row and
// ndim 0 as 1 x 1; higher ranks are flattened to (dim0 x rest).
namespace taso::tsr1 {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

struct Header {
  DType dtype = DType::kFloat64;
  std::vector<std::uint64_t> dims;
};

void write(std::ostream& out, const Matrix& m, DType dtype = DType::kFloat64);
void write(std::ostream& out, const MatrixF& m);
Matrix read(std::istream& in, Header* header = nullptr);

void save(const std::filesystem::path& path, const Matrix& m, DType dtype = DType::kFloat64);
Matrix load(const std::filesystem::path& path, Header* header = nullptr);

}  // namespace taso::tsr1
