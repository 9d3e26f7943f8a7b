#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taso/lora/adapter.hpp"
#include "taso/tensor/autodiff.hpp"
#include "taso/tensor/matrix.hpp"

namespace taso {

/// Frozen weight W0 (p x q), optional frozen bias (1 x p), optional adapter.
/// W0 only changes through merge_delta() or apply_delta().
class FrozenLinear {
 public:
  FrozenLinear(std::string name, Matrix weight, std::optional<Matrix> bias = std::nullopt);

  const std::string& name() const noexcept { return name_; }
  const Matrix& weight() const noexcept { return weight_; }
  const std::optional<Matrix>& bias() const noexcept { return bias_; }
  std::size_t out_features() const noexcept { return weight_.rows(); }
  std::size_t in_features() const noexcept { return weight_.cols(); }

  bool has_adapter() const noexcept { return adapter_.has_value(); }
  const SparseLoraModule& adapter() const;
  SparseLoraModule& adapter();
  void attach(SparseLoraModule adapter);
  SparseLoraModule detach();

  /// W0 <- W0 + effective_delta(adapter); detaches the adapter.
  void merge_delta();
  /// W0 <- W0 + delta.
  void apply_delta(const Matrix& delta);

  std::size_t parameter_count() const noexcept {
    return weight_.size() + (bias_ ? bias_->size() : 0);
  }

 private:
  std::string name_;
  Matrix weight_;
  std::optional<Matrix> bias_;
  std::optional<SparseLoraModule> adapter_;
};

FrozenLinear merge_delta(FrozenLinear layer);

enum class Activation { kIdentity, kRelu, kGelu };
enum class LossKind {
  kCrossEntropy,  // targets: class indices; metric: accuracy
  kMeanSquared,   // targets: real outputs; metric: mean squared error
  kLogitMatch,    // targets: teacher logits, fit by squared error; metric: argmax agreement
};

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);
std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view name);
/// True when evaluate() returns an accuracy rather than an error.
bool reports_accuracy(LossKind k);

struct DenseBlock {
  FrozenLinear linear;
  Activation activation = Activation::kIdentity;
};

/// Single-head self-attention over `tokens` tokens of width d. The block input
/// row holds tokens * d features; output is the token-mean of the attended
/// values (width d).
struct AttentionBlock {
  FrozenLinear query;
  FrozenLinear key;
  FrozenLinear value;
  std::size_t tokens = 1;
};

using Block = std::variant<DenseBlock, AttentionBlock>;

/// What the tape should differentiate during a forward pass.
struct TapeBinding {
  bool adapters_trainable = false;
  std::optional<std::size_t> observed_layer;  // W0 of this layer becomes gradient-observable
};

class TinyModel {
 public:
  TinyModel(std::size_t input_width, std::vector<Block> blocks, LossKind loss);

  std::size_t input_width() const noexcept { return input_width_; }
  std::size_t output_width() const;
  LossKind loss_kind() const noexcept { return loss_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

  /// Frozen linear layers in forward order (attention contributes q, k, v).
  std::size_t layer_count() const;
  FrozenLinear& layer(std::size_t index);
  const FrozenLinear& layer(std::size_t index) const;

  /// Layers that carry adapters during fine-tuning. Default: all.
  const std::vector<std::size_t>& adapter_targets() const noexcept { return targets_; }
  void set_adapter_targets(std::vector<std::size_t> targets);

  std::size_t parameter_count() const;
  void clear_adapters();

 private:
  std::size_t input_width_;
  std::vector<Block> blocks_;
  LossKind loss_;
  std::vector<std::size_t> targets_;
};

ad::TensorId weight_id(const FrozenLinear& layer);
ad::TensorId left_id(const FrozenLinear& layer);
ad::TensorId right_id(const FrozenLinear& layer);

/// Forward pass recorded on `tape`; batch along rows.
ad::Var forward(const TinyModel& model, ad::Tape& tape, const Matrix& x,
                const TapeBinding& binding = {});
/// Value-only forward pass.
Matrix forward(const TinyModel& model, const Matrix& x);

ad::Var task_loss(const TinyModel& model, ad::Var output, const Matrix& targets);

/// Accuracy for classification and logit-matching models, mean squared error
/// for regression models.
double evaluate(const TinyModel& model, const Matrix& x, const Matrix& targets);
double accuracy(const Matrix& logits, const Matrix& labels);

/// Dense MLP with frozen Gaussian weights (std 1/sqrt(fan_in)) and zero biases.
/// widths = {input, hidden..., output}; hidden layers use `hidden_activation`.
TinyModel build_tiny_classifier(const std::vector<std::size_t>& widths, std::uint64_t seed,
                                Activation hidden_activation = Activation::kRelu,
                                LossKind loss = LossKind::kCrossEntropy);

/// Attention block (tokens x d input) followed by a dense head d -> classes.
TinyModel build_attention_classifier(std::size_t tokens, std::size_t width, std::size_t classes,
                                     std::uint64_t seed);

}  // namespace taso
