#include "taso/lora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "taso/tensor/random.hpp"

namespace taso {

void TrainConfig::validate() const {
  require(base_lr > 0.0 && std::isfinite(base_lr), "config: base_lr must be positive");
  require(rank >= 1, "config: rank must be at least 1");
  require(k > 0.0 && k <= 1.0, "config: k must lie in (0, 1]");
  require(p_fraction > 0.0 && p_fraction <= 1.0, "config: p_fraction must lie in (0, 1]");
  require(rounds >= 1, "config: rounds must be at least 1");
}

AdapterTrainer::AdapterTrainer(TinyModel& model, std::vector<StageTarget> targets,
                               const TrainConfig& config, std::uint64_t shuffle_seed)
    : model_(model),
      targets_(std::move(targets)),
      config_(config),
      shuffle_seed_(shuffle_seed),
      optimizer_(config.optimizer) {
  for (const StageTarget& t : targets_) {
    require(model_.layer(t.layer).has_adapter(),
            "train_stage: layer " + model_.layer(t.layer).name() + " has no adapter");
    require(t.lr > 0.0 && std::isfinite(t.lr), "train_stage: learning rate must be positive");
  }
}

double AdapterTrainer::step(const Dataset& batch, std::size_t batch_index) {
  ad::Tape tape;
  TapeBinding binding;
  binding.adapters_trainable = true;
  ad::GradientMap grads;
  double value = 0.0;
  try {
    ad::Var out = forward(model_, tape, batch.features, binding);
    ad::Var loss = task_loss(model_, out, batch.targets);
    value = ad::scalar(loss);
    if (!std::isfinite(value)) throw NumericError("non-finite training loss");
    grads = tape.backward(loss);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at batch " + std::to_string(batch_index));
  }
  for (const StageTarget& t : targets_) {
    FrozenLinear& layer = model_.layer(t.layer);
    SparseLoraModule& a = layer.adapter();
    const ad::TensorId lid = left_id(layer);
    const ad::TensorId rid = right_id(layer);
    optimizer_.step(lid, a.left, grads.at(lid), t.lr);
    optimizer_.step(rid, a.right, grads.at(rid), t.lr);
  }
  ++batches_seen_;
  return value;
}

double AdapterTrainer::run_epoch(const Dataset& train) {
  require(train.size() > 0, "train_stage: empty training set");
  double total = 0.0;
  std::size_t count = 0;
  if (config_.batch_size == 0 || config_.batch_size >= train.size()) {
    total = step(train, batches_seen_);
    count = 1;
  } else {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(shuffle_seed_, {epochs_}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      const Dataset batch =
          train.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      total += step(batch, batches_seen_);
      ++count;
    }
  }
  ++epochs_;
  return total / static_cast<double>(count);
}

StageResult train_stage(TinyModel& model, std::span<const StageTarget> targets,
                        const Dataset& train, const TrainConfig& config,
                        std::uint64_t shuffle_seed) {
  StageResult result;
  if (targets.empty()) return result;
  AdapterTrainer trainer(model, std::vector<StageTarget>(targets.begin(), targets.end()), config,
                         shuffle_seed);
  for (std::size_t e = 0; e < config.epochs; ++e) result.loss_curve.push_back(trainer.run_epoch(train));
  result.epochs = config.epochs;
  return result;
}

}  // namespace taso
