#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "taso/importance/importance.hpp"
#include "taso/lora/optimizer.hpp"
#include "taso/models/dataset.hpp"
#include "taso/models/model.hpp"

namespace taso {

struct TrainConfig {
  double base_lr = 5e-5;
  std::size_t epochs = 1;
  std::size_t batch_size = 0;  // 0 = full batch
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t rank = 1;
  double k = 0.05;
  double p_fraction = 0.10;
  std::size_t rounds = 1;
  bool lr_scaling = true;
  std::uint64_t seed = 0;
  ImportanceMetric metric = ImportanceMetric::kSensitivity;
  GradientAggregation aggregation = GradientAggregation::kMeanGradient;
  bool recompute_between_stages = false;
  bool freeze_regions = false;  // later rounds reuse the round-1 regions

  void validate() const;
};

struct StageTarget {
  std::size_t layer = 0;
  double lr = 0.0;
};

/// Trains the adapters attached to the target layers; everything else is
/// constant on the tape.
class AdapterTrainer {
 public:
  AdapterTrainer(TinyModel& model, std::vector<StageTarget> targets, const TrainConfig& config,
                 std::uint64_t shuffle_seed);

  /// One optimizer step on `batch`; returns the batch loss before the step.
  double step(const Dataset& batch, std::size_t batch_index = 0);
  /// One pass over `train` in shuffled minibatches; returns the mean batch loss.
  double run_epoch(const Dataset& train);

  const Optimizer& optimizer() const noexcept { return optimizer_; }
  std::size_t epochs_run() const noexcept { return epochs_; }

 private:
  TinyModel& model_;
  std::vector<StageTarget> targets_;
  TrainConfig config_;
  std::uint64_t shuffle_seed_;
  Optimizer optimizer_;
  std::size_t epochs_ = 0;
  std::size_t batches_seen_ = 0;
};

struct StageResult {
  std::vector<double> loss_curve;  // mean training loss per epoch
  std::size_t epochs = 0;
};

StageResult train_stage(TinyModel& model, std::span<const StageTarget> targets,
                        const Dataset& train, const TrainConfig& config,
                        std::uint64_t shuffle_seed);

}  // namespace taso
