#pragma once

#include <functional>

#include "taso/tensor/matrix.hpp"

namespace taso {

/// Central-difference gradient (f(theta + eps e) - f(theta - eps e)) / (2 eps),
/// one entry at a time. Throws NumericError if f returns a non-finite value.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& theta,
                        double eps);

}  // namespace taso
