#pragma once

#include <compare>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taso/tensor/matrix.hpp"

// Reverse-mode differentiation over Matrix values.
//
// A Tape records every operation whose operands require gradients. Leaves come
// in three kinds: constants (never differentiated), parameters (trainable), and
// observed tensors (frozen weights whose gradient is wanted for importance
// estimation). Nodes live in creation order, which is a topological order, so
// backward() is one reverse sweep. A tape is single-use.
namespace taso::ad {

struct TensorId {
  std::string name;
  auto operator<=>(const TensorId&) const = default;
};

using GradientMap = std::map<TensorId, Matrix>;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  // Called once with the upstream gradient; pushes contributions to operands
  // through Tape::accumulate.
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(TensorId id, Matrix value);
  Var observe(TensorId id, Matrix value);

  /// Gradient of a 1x1 loss w.r.t. every parameter and observed leaf. Leaves
  /// the loss does not depend on get an exact zero matrix. Consumes the tape.
  GradientMap backward(Var loss);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-facing API.
  Var record(Matrix value, std::initializer_list<Var> operands, BackwardFn backward);
  void accumulate(const Var& target, const Matrix& contribution);
  const Matrix& value_of(std::size_t index) const { return nodes_[index].value; }
  bool requires_grad_of(std::size_t index) const { return nodes_[index].requires_grad; }

 private:
  struct Node {
    Matrix value;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<TensorId> leaf_id;
  };

  Var leaf(Matrix value, bool requires_grad, std::optional<TensorId> id);

  std::deque<Node> nodes_;
  std::vector<std::optional<Matrix>> grads_;
  bool consumed_ = false;
  bool in_backward_ = false;
};

// Primitive operations. All operands must belong to the same tape.
Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
// a (n x p) + bias (1 x p) broadcast over rows
Var add_row_broadcast(Var a, Var bias);
Var relu(Var a);
Var gelu(Var a);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var row_softmax(Var a);
Var sum(Var a);
Var mean(Var a);

/// Mean over rows of -log softmax(logits)[label]. `labels` holds class
/// indices stored as doubles in column 0.
Var cross_entropy(Var logits, const Matrix& labels);
/// Mean over all entries of (pred - target)^2.
Var mean_squared_error(Var pred, const Matrix& target);

/// Single-head scaled dot-product attention applied independently to each
/// group of `tokens` consecutive rows of q, k and v.
Var self_attention(Var q, Var k, Var v, std::size_t tokens);
/// Mean of each group of `tokens` consecutive rows: (n*tokens x d) -> (n x d).
Var token_mean_pool(Var a, std::size_t tokens);

double scalar(const Var& v);

}  // namespace taso::ad
