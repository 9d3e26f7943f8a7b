#include "taso/baselines/dense_lora.hpp"

#include <chrono>

#include "taso/lora/pipeline.hpp"
#include "taso/tensor/random.hpp"

namespace taso {

RunReport dense_lora_finetune(TinyModel& model, const Dataset& train, const Dataset& eval,
                              std::size_t rank, const TrainConfig& config) {
  require(rank >= 1, "dense_lora: rank must be at least 1");
  TrainConfig cfg = config;
  cfg.rank = rank;
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  model.clear_adapters();

  RunReport report;
  report.arm = "dense_lora";
  report.metric = metric_name(model);
  report.seed = cfg.seed;
  report.config = to_json(cfg);
  report.base_eval = evaluate(model, eval.features, eval.targets);

  StageReport stage;
  stage.stage = "dense";
  std::vector<StageTarget> targets;
  for (std::size_t layer : model.adapter_targets()) {
    FrozenLinear& lin = model.layer(layer);
    SparseLoraModule adapter = init_dense_adapter(lin.out_features(), lin.in_features(), rank,
                                                  derive_seed(cfg.seed, {layer, 11}));
    LayerStageReport lr;
    lr.layer = layer;
    lr.name = lin.name();
    lr.lr = cfg.base_lr;
    lr.trainable = count_trainable(adapter);
    stage.trainable += lr.trainable;
    stage.layers.push_back(std::move(lr));
    targets.push_back(StageTarget{layer, cfg.base_lr});
    lin.attach(std::move(adapter));
  }
  const StageResult result = train_stage(model, targets, train, cfg, derive_seed(cfg.seed, {12}));
  stage.loss_curve = result.loss_curve;
  stage.epochs = result.epochs;
  for (const StageTarget& t : targets) model.layer(t.layer).merge_delta();
  stage.eval_metric = evaluate(model, eval.features, eval.targets);

  report.trainable = stage.trainable;
  report.total_epochs = stage.epochs;
  report.final_eval = stage.eval_metric;
  RoundReport round;
  round.stages.push_back(std::move(stage));
  report.rounds.push_back(std::move(round));
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace taso
