#include "taso/baselines/imp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "taso/lora/pipeline.hpp"
#include "taso/tensor/random.hpp"

namespace taso {

namespace {

struct Ticket {
  std::size_t layer = 0;
  Matrix left0;
  Matrix right0;
  Matrix left_mask;
  Matrix right_mask;
  std::size_t pruned = 0;

  std::size_t entries() const { return left0.size() + right0.size(); }
};

// Flat position over [left entries, right entries]; on equal magnitude the
// lower position is pruned first, so left entries go before right ones.
struct Entry {
  double magnitude;
  std::size_t pos;
};

void prune_to(Ticket& t, const SparseLoraModule& trained, std::size_t target) {
  if (target <= t.pruned) return;
  std::vector<Entry> alive;
  const Matrix left = trained.masked_left();
  const Matrix right = trained.masked_right();
  for (std::size_t i = 0; i < left.size(); ++i)
    if (t.left_mask[i] != 0.0) alive.push_back({std::abs(left[i]), i});
  for (std::size_t i = 0; i < right.size(); ++i)
    if (t.right_mask[i] != 0.0) alive.push_back({std::abs(right[i]), left.size() + i});
  const std::size_t drop = std::min(target - t.pruned, alive.size());
  std::sort(alive.begin(), alive.end(), [](const Entry& a, const Entry& b) {
    return a.magnitude != b.magnitude ? a.magnitude < b.magnitude : a.pos < b.pos;
  });
  for (std::size_t i = 0; i < drop; ++i) {
    const std::size_t pos = alive[i].pos;
    if (pos < left.size())
      t.left_mask[pos] = 0.0;
    else
      t.right_mask[pos - left.size()] = 0.0;
  }
  t.pruned += drop;
}

SparseLoraModule rewound(const Ticket& t) {
  SparseLoraModule m;
  m.left = hadamard(t.left0, t.left_mask);
  m.right = hadamard(t.right0, t.right_mask);
  m.left_mask = t.left_mask;
  m.right_mask = t.right_mask;
  m.stage = Stage::kDense;
  m.rho = static_cast<double>(t.pruned) / static_cast<double>(t.entries());
  return m;
}

}  // namespace

std::vector<double> imp_schedule(double target_sparsity, std::size_t n_iterations) {
  require(target_sparsity > 0.0 && target_sparsity < 1.0,
          "imp: target sparsity must lie in (0, 1)");
  require(n_iterations >= 1, "imp: n_iterations must be at least 1");
  std::vector<double> s(n_iterations);
  for (std::size_t t = 1; t <= n_iterations; ++t)
    s[t - 1] = 1.0 - std::pow(1.0 - target_sparsity,
                              static_cast<double>(t) / static_cast<double>(n_iterations));
  s.back() = target_sparsity;
  return s;
}

RunReport imp_lora(TinyModel& model, const Dataset& train, const Dataset& eval, std::size_t rank,
                   double target_sparsity, std::size_t n_iterations, const TrainConfig& config,
                   const ImpRewindHook& on_rewind) {
  const std::vector<double> schedule = imp_schedule(target_sparsity, n_iterations);
  require(rank >= 1, "imp: rank must be at least 1");
  TrainConfig cfg = config;
  cfg.rank = rank;
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  model.clear_adapters();

  RunReport report;
  report.arm = "imp";
  report.metric = metric_name(model);
  report.seed = cfg.seed;
  report.config = to_json(cfg);
  report.config["target_sparsity"] = target_sparsity;
  report.config["n_iterations"] = n_iterations;
  report.base_eval = evaluate(model, eval.features, eval.targets);

  std::vector<Ticket> tickets;
  std::vector<StageTarget> targets;
  for (std::size_t layer : model.adapter_targets()) {
    FrozenLinear& lin = model.layer(layer);
    SparseLoraModule a = init_dense_adapter(lin.out_features(), lin.in_features(), rank,
                                            derive_seed(cfg.seed, {layer, 21}));
    Ticket t;
    t.layer = layer;
    t.left0 = a.left;
    t.right0 = a.right;
    t.left_mask = Matrix::ones(a.left.rows(), a.left.cols());
    t.right_mask = Matrix::ones(a.right.rows(), a.right.cols());
    tickets.push_back(std::move(t));
    targets.push_back(StageTarget{layer, cfg.base_lr});
  }

  RoundReport round;
  std::size_t total_entries = 0;
  for (const Ticket& t : tickets) total_entries += t.entries();

  for (std::size_t iter = 0; iter <= n_iterations; ++iter) {
    if (iter > 0) {
      for (Ticket& t : tickets) {
        const std::size_t goal = fraction_count(schedule[iter - 1], t.entries());
        prune_to(t, model.layer(t.layer).adapter(), goal);
      }
    }
    StageReport stage;
    stage.stage = "iter" + std::to_string(iter);
    std::size_t pruned = 0;
    for (const Ticket& t : tickets) {
      FrozenLinear& lin = model.layer(t.layer);
      if (lin.has_adapter()) lin.detach();
      SparseLoraModule m = rewound(t);
      LayerStageReport lr;
      lr.layer = t.layer;
      lr.name = lin.name();
      lr.rho = m.rho;
      lr.lr = cfg.base_lr;
      lr.trainable = count_trainable(m);
      stage.trainable += lr.trainable;
      stage.layers.push_back(std::move(lr));
      pruned += t.pruned;
      if (on_rewind) on_rewind(iter, t.layer, m);
      lin.attach(std::move(m));
    }
    const StageResult result =
        train_stage(model, targets, train, cfg, derive_seed(cfg.seed, {iter, 22}));
    stage.loss_curve = result.loss_curve;
    stage.epochs = result.epochs;
    stage.rho = static_cast<double>(pruned) / static_cast<double>(total_entries);
    stage.sparsity = stage.rho;
    stage.eval_metric = evaluate(model, eval.features, eval.targets);
    report.total_epochs += stage.epochs;
    round.stages.push_back(std::move(stage));
  }

  for (const Ticket& t : tickets) model.layer(t.layer).merge_delta();
  report.final_eval = evaluate(model, eval.features, eval.targets);
  report.trainable = round.stages.back().trainable;
  report.sparsity = *round.stages.back().sparsity;
  report.rounds.push_back(std::move(round));
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace taso
