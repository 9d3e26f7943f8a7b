#include "taso/tensor/matrix.hpp"

#include <algorithm>

namespace taso {

namespace {
void check_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}
}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
  check_same(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  check_same(a, b, "sub");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (auto& v : c.data()) v *= s;
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  check_same(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  // Zero factors give +0.0 so masked entries stay bitwise zero.
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = (a[i] == 0.0 || b[i] == 0.0) ? 0.0 : a[i] * b[i];
  return c;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double relative_error(const Matrix& a, const Matrix& b) {
  check_same(a, b, "relative_error");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / std::max(1.0, max_abs(b));
}

}  // namespace taso
