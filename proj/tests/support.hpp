#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "taso/tensor/matrix.hpp"
#include "taso/tensor/random.hpp"

namespace taso::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  return gaussian_matrix(rows, cols, stddev, rng);
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Textbook i-j-k triple loop, inner index ascending.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) s += a(i, t) * b(t, j);
      c(i, j) = s;
    }
  return c;
}

inline double dot_flat(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Matrix& a, const Matrix& b) {
  return dot_flat(a, b) / (frobenius_norm(a) * frobenius_norm(b));
}

}  // namespace taso::test
