#include "taso/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "taso/tensor/random.hpp"

namespace taso {

FrozenLinear::FrozenLinear(std::string name, Matrix weight, std::optional<Matrix> bias)
    : name_(std::move(name)), weight_(std::move(weight)), bias_(std::move(bias)) {
  require(weight_.rows() > 0 && weight_.cols() > 0, "FrozenLinear: empty weight");
  if (bias_ && (bias_->rows() != 1 || bias_->cols() != weight_.rows()))
    throw ShapeError("FrozenLinear " + name_ + ": bias " + bias_->shape() +
                     " does not match weight " + weight_.shape());
}

const SparseLoraModule& FrozenLinear::adapter() const {
  if (!adapter_) throw ContractError("layer " + name_ + " has no adapter attached");
  return *adapter_;
}

SparseLoraModule& FrozenLinear::adapter() {
  if (!adapter_) throw ContractError("layer " + name_ + " has no adapter attached");
  return *adapter_;
}

void FrozenLinear::attach(SparseLoraModule adapter) {
  if (adapter.out_features() != out_features() || adapter.in_features() != in_features())
    throw ShapeError("adapter " + adapter.left.shape() + " x " + adapter.right.shape() +
                     " does not fit layer " + name_ + " " + weight_.shape());
  adapter_ = std::move(adapter);
}

SparseLoraModule FrozenLinear::detach() {
  if (!adapter_) throw ContractError("layer " + name_ + " has no adapter attached");
  SparseLoraModule out = std::move(*adapter_);
  adapter_.reset();
  return out;
}

void FrozenLinear::merge_delta() {
  if (!adapter_) throw ContractError("merge_delta: layer " + name_ + " has no adapter attached");
  apply_delta(effective_delta(*adapter_));
  adapter_.reset();
}

void FrozenLinear::apply_delta(const Matrix& delta) {
  if (!delta.same_shape(weight_))
    throw ShapeError("delta " + delta.shape() + " does not match layer " + name_ + " " +
                     weight_.shape());
  Matrix updated = weight_ + delta;
  if (!updated.all_finite()) throw NumericError("merged weight of " + name_ + " is not finite");
  weight_ = std::move(updated);
}

FrozenLinear merge_delta(FrozenLinear layer) {
  layer.merge_delta();
  return layer;
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kGelu:
      return "gelu";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "none" || name == "linear") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kCrossEntropy:
      return "cross_entropy";
    case LossKind::kMeanSquared:
      return "mse";
    case LossKind::kLogitMatch:
      return "logit_match";
  }
  return "mse";
}

bool reports_accuracy(LossKind k) { return k != LossKind::kMeanSquared; }

LossKind parse_loss(std::string_view name) {
  if (name == "cross_entropy" || name == "ce") return LossKind::kCrossEntropy;
  if (name == "mse" || name == "mean_squared") return LossKind::kMeanSquared;
  if (name == "logit_match") return LossKind::kLogitMatch;
  throw ContractError("unknown loss '" + std::string(name) + "'");
}

TinyModel::TinyModel(std::size_t input_width, std::vector<Block> blocks, LossKind loss)
    : input_width_(input_width), blocks_(std::move(blocks)), loss_(loss) {
  require(!blocks_.empty(), "TinyModel: needs at least one block");
  std::size_t width = input_width_;
  for (const Block& b : blocks_) {
    if (const auto* dense = std::get_if<DenseBlock>(&b)) {
      if (dense->linear.in_features() != width)
        throw ShapeError("layer " + dense->linear.name() + " expects " +
                         std::to_string(dense->linear.in_features()) + " inputs, got " +
                         std::to_string(width));
      width = dense->linear.out_features();
    } else {
      const auto& a = std::get<AttentionBlock>(b);
      const std::size_t d = a.query.in_features();
      require(a.tokens >= 1, "attention block needs at least one token");
      for (const FrozenLinear* l : {&a.query, &a.key, &a.value})
        if (l->in_features() != d || l->out_features() != d)
          throw ShapeError("attention projection " + l->name() + " must be square " +
                           std::to_string(d) + "x" + std::to_string(d));
      if (a.tokens * d != width)
        throw ShapeError("attention block expects " + std::to_string(a.tokens * d) +
                         " inputs, got " + std::to_string(width));
      width = d;
    }
  }
  targets_.resize(layer_count());
  for (std::size_t i = 0; i < targets_.size(); ++i) targets_[i] = i;
}

std::size_t TinyModel::output_width() const {
  const Block& last = blocks_.back();
  if (const auto* d = std::get_if<DenseBlock>(&last)) return d->linear.out_features();
  return std::get<AttentionBlock>(last).query.out_features();
}

std::size_t TinyModel::layer_count() const {
  std::size_t n = 0;
  for (const Block& b : blocks_) n += std::holds_alternative<DenseBlock>(b) ? 1 : 3;
  return n;
}

FrozenLinear& TinyModel::layer(std::size_t index) {
  return const_cast<FrozenLinear&>(std::as_const(*this).layer(index));
}

const FrozenLinear& TinyModel::layer(std::size_t index) const {
  std::size_t seen = 0;
  for (const Block& b : blocks_) {
    if (const auto* dense = std::get_if<DenseBlock>(&b)) {
      if (seen == index) return dense->linear;
      ++seen;
    } else {
      const auto& a = std::get<AttentionBlock>(b);
      if (index < seen + 3) return index == seen ? a.query : index == seen + 1 ? a.key : a.value;
      seen += 3;
    }
  }
  throw ContractError("layer index " + std::to_string(index) + " out of range (" +
                      std::to_string(seen) + " layers)");
}

void TinyModel::set_adapter_targets(std::vector<std::size_t> targets) {
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (std::size_t t : targets)
    require(t < layer_count(), "adapter target " + std::to_string(t) + " out of range");
  targets_ = std::move(targets);
}

std::size_t TinyModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < layer_count(); ++i) n += layer(i).parameter_count();
  return n;
}

void TinyModel::clear_adapters() {
  for (std::size_t i = 0; i < layer_count(); ++i)
    if (layer(i).has_adapter()) layer(i).detach();
}

ad::TensorId weight_id(const FrozenLinear& layer) { return {layer.name() + ".weight"}; }
ad::TensorId left_id(const FrozenLinear& layer) { return {layer.name() + ".left"}; }
ad::TensorId right_id(const FrozenLinear& layer) { return {layer.name() + ".right"}; }

namespace {

ad::Var linear_forward(const FrozenLinear& layer, std::size_t index, ad::Tape& tape, ad::Var x,
                       const TapeBinding& binding) {
  ad::Var w = binding.observed_layer == index ? tape.observe(weight_id(layer), layer.weight())
                                              : tape.constant(layer.weight());
  ad::Var y = ad::matmul_nt(x, w);
  if (layer.has_adapter()) {
    const SparseLoraModule& a = layer.adapter();
    ad::Var left = binding.adapters_trainable ? tape.parameter(left_id(layer), a.left)
                                              : tape.constant(a.left);
    ad::Var right = binding.adapters_trainable ? tape.parameter(right_id(layer), a.right)
                                               : tape.constant(a.right);
    if (a.left_mask) left = ad::hadamard(left, tape.constant(*a.left_mask));
    if (a.right_mask) right = ad::hadamard(right, tape.constant(*a.right_mask));
    // x (n x q) -> x right^T (n x r) -> (x right^T) left^T (n x p)
    y = ad::add(y, ad::matmul_nt(ad::matmul_nt(x, right), left));
  }
  if (layer.bias()) y = ad::add_row_broadcast(y, tape.constant(*layer.bias()));
  return y;
}

ad::Var activate(ad::Var x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kGelu:
      return ad::gelu(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

}  // namespace

ad::Var forward(const TinyModel& model, ad::Tape& tape, const Matrix& x,
                const TapeBinding& binding) {
  if (x.cols() != model.input_width())
    throw ShapeError("forward: input " + x.shape() + " but model expects " +
                     std::to_string(model.input_width()) + " columns");
  ad::Var h = tape.constant(x);
  std::size_t index = 0;
  for (const Block& b : model.blocks()) {
    if (const auto* dense = std::get_if<DenseBlock>(&b)) {
      h = activate(linear_forward(dense->linear, index, tape, h, binding), dense->activation);
      ++index;
    } else {
      const auto& a = std::get<AttentionBlock>(b);
      const std::size_t n = h.rows();
      const std::size_t d = a.query.in_features();
      ad::Var tokens = ad::reshape(h, n * a.tokens, d);
      ad::Var q = linear_forward(a.query, index, tape, tokens, binding);
      ad::Var k = linear_forward(a.key, index + 1, tape, tokens, binding);
      ad::Var v = linear_forward(a.value, index + 2, tape, tokens, binding);
      h = ad::token_mean_pool(ad::self_attention(q, k, v, a.tokens), a.tokens);
      index += 3;
    }
  }
  return h;
}

Matrix forward(const TinyModel& model, const Matrix& x) {
  ad::Tape tape;
  return forward(model, tape, x).value();
}

ad::Var task_loss(const TinyModel& model, ad::Var output, const Matrix& targets) {
  return model.loss_kind() == LossKind::kCrossEntropy ? ad::cross_entropy(output, targets)
                                                      : ad::mean_squared_error(output, targets);
}

double accuracy(const Matrix& logits, const Matrix& labels) {
  if (labels.rows() != logits.rows()) throw ShapeError("accuracy: label count mismatch");
  if (logits.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += static_cast<double>(best) == labels(i, 0) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double evaluate(const TinyModel& model, const Matrix& x, const Matrix& targets) {
  const Matrix out = forward(model, x);
  if (model.loss_kind() == LossKind::kCrossEntropy) return accuracy(out, targets);
  if (!out.same_shape(targets)) throw ShapeError("evaluate: target shape mismatch");
  if (model.loss_kind() == LossKind::kLogitMatch) {
    Matrix labels(targets.rows(), 1);
    for (std::size_t i = 0; i < targets.rows(); ++i) {
      auto row = targets.row(i);
      labels(i, 0) = static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return accuracy(out, labels);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += (out[i] - targets[i]) * (out[i] - targets[i]);
  return s / static_cast<double>(out.size());
}

TinyModel build_tiny_classifier(const std::vector<std::size_t>& widths, std::uint64_t seed,
                                Activation hidden_activation, LossKind loss) {
  require(widths.size() >= 2, "build_tiny_classifier: need at least input and output widths");
  for (std::size_t w : widths) require(w > 0, "build_tiny_classifier: widths must be positive");
  Rng rng(seed);
  std::vector<Block> blocks;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t q = widths[l];
    const std::size_t p = widths[l + 1];
    Matrix w = gaussian_matrix(p, q, 1.0 / std::sqrt(static_cast<double>(q)), rng);
    const bool last = l + 2 == widths.size();
    blocks.emplace_back(DenseBlock{FrozenLinear("dense" + std::to_string(l), std::move(w), Matrix(1, p)),
                                   last ? Activation::kIdentity : hidden_activation});
  }
  return TinyModel(widths.front(), std::move(blocks), loss);
}

TinyModel build_attention_classifier(std::size_t tokens, std::size_t width, std::size_t classes,
                                     std::uint64_t seed) {
  require(tokens > 0 && width > 0 && classes > 0, "build_attention_classifier: sizes must be positive");
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  AttentionBlock attn{FrozenLinear("attn0.q", gaussian_matrix(width, width, s, rng)),
                      FrozenLinear("attn0.k", gaussian_matrix(width, width, s, rng)),
                      FrozenLinear("attn0.v", gaussian_matrix(width, width, s, rng)), tokens};
  DenseBlock head{FrozenLinear("dense1", gaussian_matrix(classes, width, s, rng), Matrix(1, classes)),
                  Activation::kIdentity};
  std::vector<Block> blocks;
  blocks.emplace_back(std::move(attn));
  blocks.emplace_back(std::move(head));
  return TinyModel(tokens * width, std::move(blocks), LossKind::kCrossEntropy);
}

}  // namespace taso
