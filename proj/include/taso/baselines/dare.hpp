#pragma once

#include "taso/tensor/matrix.hpp"

namespace taso {

/// delta * 1/(1 - rho); zeros stay +0.0.
Matrix dare_rescale(const Matrix& delta, double rho);

}  // namespace taso
