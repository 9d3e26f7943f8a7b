#include "taso/lora/pipeline.hpp"

#include <chrono>
#include <numeric>

#include "taso/baselines/dare.hpp"
#include "taso/baselines/random_region.hpp"
#include "taso/importance/importance.hpp"
#include "taso/tensor/random.hpp"

namespace taso {

namespace {

constexpr std::uint64_t kAdapterTag = 1;
constexpr std::uint64_t kShuffleTag = 2;
constexpr std::uint64_t kRegionTag = 3;

std::uint64_t stage_tag(Stage s) { return static_cast<std::uint64_t>(s); }

StageReport run_stage(TinyModel& model, const Dataset& train, const Dataset& eval,
                      const TrainConfig& config, const TasoOptions& options,
                      const std::map<std::size_t, CoreRegion>& regions, Stage stage,
                      std::size_t round) {
  StageReport report;
  report.stage = std::string(to_string(stage));
  std::vector<StageTarget> targets;
  double rho_sum = 0.0;

  for (std::size_t layer : model.adapter_targets()) {
    FrozenLinear& lin = model.layer(layer);
    const CoreRegion& region = regions.at(layer);
    LayerStageReport lr;
    lr.layer = layer;
    lr.name = lin.name();
    const auto& support = stage == Stage::kRow ? region.rows : region.cols;
    if (support.empty()) {
      lr.skipped = true;
      report.layers.push_back(std::move(lr));
      continue;
    }
    const std::size_t p = lin.out_features();
    const std::size_t q = lin.in_features();
    SparseLoraModule adapter =
        init_adapter(p, q, config.rank, stage, region,
                     derive_seed(config.seed, {round, stage_tag(stage), layer, kAdapterTag}));
    lr.rho = adapter.rho;
    lr.lr = config.lr_scaling ? scaled_lr(config.base_lr, adapter.rho) : config.base_lr;
    lr.trainable = count_trainable(adapter);
    lr.support = support;
    report.trainable += lr.trainable;
    rho_sum += adapter.rho;
    targets.push_back(StageTarget{layer, lr.lr});
    lin.attach(std::move(adapter));
    report.layers.push_back(std::move(lr));
  }

  const StageResult result = train_stage(
      model, targets, train, config, derive_seed(config.seed, {round, stage_tag(stage), kShuffleTag}));
  report.loss_curve = result.loss_curve;
  report.epochs = result.epochs;
  report.rho = targets.empty() ? 0.0 : rho_sum / static_cast<double>(targets.size());

  for (const StageTarget& t : targets) {
    FrozenLinear& lin = model.layer(t.layer);
    if (options.on_adapter) options.on_adapter(round, t.layer, lin.adapter(), regions.at(t.layer));
    if (options.dare_merge) {
      const SparseLoraModule adapter = lin.detach();
      lin.apply_delta(dare_rescale(effective_delta(adapter), adapter.rho));
    } else {
      lin.merge_delta();
    }
  }
  report.eval_metric = evaluate(model, eval.features, eval.targets);
  return report;
}

}  // namespace

std::string metric_name(const TinyModel& model) {
  return reports_accuracy(model.loss_kind()) ? "accuracy" : "mse";
}

std::map<std::size_t, CoreRegion> compute_regions(const TinyModel& model, const Dataset& train,
                                                  const TrainConfig& config,
                                                  const TasoOptions& options, std::size_t round) {
  std::map<std::size_t, CoreRegion> regions;
  const std::vector<Dataset> batches = make_batches(train, config.batch_size);
  for (std::size_t layer : model.adapter_targets()) {
    const FrozenLinear& lin = model.layer(layer);
    switch (options.region_source) {
      case RegionSource::kImportance:
        regions[layer] = select_region(model, batches, layer, config.k, config.p_fraction,
                                       config.metric, config.aggregation)
                             .region;
        break;
      case RegionSource::kRandom:
        regions[layer] =
            random_core_region(lin.out_features(), lin.in_features(), config.p_fraction,
                               derive_seed(config.seed, {round, layer, kRegionTag}));
        break;
      case RegionSource::kOracle: {
        auto it = options.oracle_regions.find(layer);
        require(it != options.oracle_regions.end(),
                "taso: no oracle region for layer " + lin.name());
        regions[layer] = it->second;
        break;
      }
    }
  }
  return regions;
}

RunReport taso_finetune(TinyModel& model, const Dataset& train, const Dataset& eval,
                        const TrainConfig& config, const TasoOptions& options) {
  config.validate();
  require(train.size() > 0 && eval.size() > 0, "taso: empty train or eval split");
  const auto start = std::chrono::steady_clock::now();
  model.clear_adapters();

  RunReport report;
  report.arm = options.arm;
  report.metric = metric_name(model);
  report.seed = config.seed;
  report.config = to_json(config);
  report.base_eval = evaluate(model, eval.features, eval.targets);

  std::map<std::size_t, CoreRegion> frozen;
  double rho_total = 0.0;
  std::size_t stage_count = 0;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    std::map<std::size_t, CoreRegion> regions =
        config.freeze_regions && round > 0 ? frozen
                                           : compute_regions(model, train, config, options, round);
    if (round == 0) frozen = regions;

    RoundReport rr;
    rr.round = round;
    for (const auto& [layer, region] : regions)
      rr.regions.push_back(RegionReport{layer, region.rows, region.cols});

    rr.stages.push_back(run_stage(model, train, eval, config, options, regions, Stage::kRow, round));
    if (config.recompute_between_stages && !(config.freeze_regions && round > 0))
      regions = compute_regions(model, train, config, options, round);
    rr.stages.push_back(
        run_stage(model, train, eval, config, options, regions, Stage::kColumn, round));

    for (const StageReport& s : rr.stages) {
      report.trainable += s.trainable;
      report.total_epochs += s.epochs;
      rho_total += s.rho;
      ++stage_count;
    }
    report.rounds.push_back(std::move(rr));
  }
  report.sparsity = stage_count ? rho_total / static_cast<double>(stage_count) : 0.0;
  report.final_eval = report.rounds.back().stages.back().eval_metric;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace taso
