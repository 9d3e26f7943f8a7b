#include "taso/lora/optimizer.hpp"

#include <cmath>
#include <string>

namespace taso {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ContractError("unknown optimizer '" + std::string(name) + "'");
}

void Optimizer::step(const ad::TensorId& id, Matrix& param, const Matrix& grad, double lr) {
  if (!param.same_shape(grad))
    throw ShapeError("optimizer: gradient " + grad.shape() + " for parameter " + param.shape());
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    return;
  }
  State& s = state_[id];
  if (s.t == 0) {
    s.m = Matrix(param.rows(), param.cols());
    s.v = Matrix(param.rows(), param.cols());
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    s.m[i] = hyper_.beta1 * s.m[i] + (1.0 - hyper_.beta1) * g;
    s.v[i] = hyper_.beta2 * s.v[i] + (1.0 - hyper_.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + hyper_.eps);
  }
}

const Matrix* Optimizer::first_moment(const ad::TensorId& id) const {
  auto it = state_.find(id);
  return it == state_.end() ? nullptr : &it->second.m;
}

const Matrix* Optimizer::second_moment(const ad::TensorId& id) const {
  auto it = state_.find(id);
  return it == state_.end() ? nullptr : &it->second.v;
}

}  // namespace taso
