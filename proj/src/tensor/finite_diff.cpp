#include "taso/tensor/finite_diff.hpp"

#include <cmath>
#include <string>

namespace taso {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& theta,
                        double eps) {
  require(eps > 0.0 && std::isfinite(eps), "finite_diff_grad: step must be positive");
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: non-finite evaluation at entry " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace taso
