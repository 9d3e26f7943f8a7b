#include "taso/baselines/dare.hpp"

#include <cmath>

#include "taso/tensor/errors.hpp"

namespace taso {

Matrix dare_rescale(const Matrix& delta, double rho) {
  require(std::isfinite(rho) && rho >= 0.0 && rho < 1.0, "dare_rescale: rho must lie in [0, 1)");
  const double factor = 1.0 / (1.0 - rho);
  Matrix out = delta;
  for (double& v : out.data()) v = v == 0.0 ? 0.0 : v * factor;
  return out;
}

}  // namespace taso
