#pragma once

#include <cstddef>

#include "taso/tensor/matrix.hpp"

// Matrix-product kernels. The serial versions are the reference; the parallel
// versions split output rows across OpenMP threads and keep the per-entry
// summation order identical (inner index ascending), so both produce
// bit-identical results for any thread count.
namespace taso::kernels {

namespace serial {
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
// a^T * b
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
// a * b^T
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
}  // namespace serial

namespace parallel {
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
}  // namespace parallel

// Multiply-adds below which the dispatching entry points stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

bool openmp_enabled() noexcept;
int max_threads() noexcept;

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

}  // namespace taso::kernels
