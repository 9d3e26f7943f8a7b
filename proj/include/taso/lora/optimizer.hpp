#pragma once

#include <cstddef>
#include <map>
#include <string_view>

#include "taso/tensor/autodiff.hpp"
#include "taso/tensor/matrix.hpp"

namespace taso {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Plain SGD or Adam with per-tensor state keyed by TensorId.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind, AdamHyper hyper = {}) : kind_(kind), hyper_(hyper) {}

  void step(const ad::TensorId& id, Matrix& param, const Matrix& grad, double lr);

  OptimizerKind kind() const noexcept { return kind_; }
  // Adam moments; nullptr for SGD or unseen tensors.
  const Matrix* first_moment(const ad::TensorId& id) const;
  const Matrix* second_moment(const ad::TensorId& id) const;

 private:
  struct State {
    Matrix m;
    Matrix v;
    std::size_t t = 0;
  };

  OptimizerKind kind_;
  AdamHyper hyper_;
  std::map<ad::TensorId, State> state_;
};

}  // namespace taso
