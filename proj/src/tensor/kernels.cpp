#include "taso/tensor/kernels.hpp"

#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace taso::kernels {

namespace {

template <typename T>
void check_inner(const BasicMatrix<T>& a, std::size_t a_inner, const BasicMatrix<T>& b,
                 std::size_t b_inner, const char* op) {
  if (a_inner != b_inner) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape() + " and " + b.shape());
  }
}

// c[i,:] = sum_k a[i,k] * b[k,:]
template <typename T>
inline void matmul_row(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                       std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  T* out = c.data().data() + i * n;
  for (std::size_t k = 0; k < inner; ++k) {
    const T aik = a(i, k);
    const T* brow = b.data().data() + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
  }
}

// c[i,:] = sum_k a[k,i] * b[k,:]
template <typename T>
inline void matmul_tn_row(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                          std::size_t i) {
  const std::size_t inner = a.rows();
  const std::size_t n = b.cols();
  T* out = c.data().data() + i * n;
  for (std::size_t k = 0; k < inner; ++k) {
    const T aki = a(k, i);
    const T* brow = b.data().data() + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aki * brow[j];
  }
}

// c[i,j] = sum_k a[i,k] * b[j,k]
template <typename T>
inline void matmul_nt_row(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                          std::size_t i) {
  const std::size_t inner = a.cols();
  const T* arow = a.data().data() + i * inner;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const T* brow = b.data().data() + j * inner;
    T acc{};
    for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
    c(i, j) = acc;
  }
}

template <typename T>
std::size_t work(const BasicMatrix<T>& c, std::size_t inner) {
  return c.size() * inner;
}

}  // namespace

namespace serial {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.cols(), b, b.rows(), "matmul");
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
  return c;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.rows(), b, b.rows(), "matmul_tn");
  BasicMatrix<T> c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, c, i);
  return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.cols(), b, b.cols(), "matmul_nt");
  BasicMatrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, c, i);
  return c;
}

}  // namespace serial

namespace parallel {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.cols(), b, b.rows(), "matmul");
  BasicMatrix<T> c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.rows(), b, b.rows(), "matmul_tn");
  BasicMatrix<T> c(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_tn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_inner(a, a.cols(), b, b.cols(), "matmul_nt");
  BasicMatrix<T> c(a.rows(), b.rows());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_nt_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

}  // namespace parallel

bool openmp_enabled() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() * a.cols() * b.cols() >= kParallelThreshold && max_threads() > 1)
    return parallel::matmul(a, b);
  return serial::matmul(a, b);
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() * a.cols() * b.cols() >= kParallelThreshold && max_threads() > 1)
    return parallel::matmul_tn(a, b);
  return serial::matmul_tn(a, b);
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() * a.cols() * b.rows() >= kParallelThreshold && max_threads() > 1)
    return parallel::matmul_nt(a, b);
  return serial::matmul_nt(a, b);
}

#define TASO_INSTANTIATE_KERNELS(T)                                                  \
  template BasicMatrix<T> serial::matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);     \
  template BasicMatrix<T> serial::matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);  \
  template BasicMatrix<T> serial::matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);  \
  template BasicMatrix<T> parallel::matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> parallel::matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&); \
  template BasicMatrix<T> parallel::matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&); \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);             \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);          \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);

TASO_INSTANTIATE_KERNELS(float)
TASO_INSTANTIATE_KERNELS(double)

#undef TASO_INSTANTIATE_KERNELS

}  // namespace taso::kernels
