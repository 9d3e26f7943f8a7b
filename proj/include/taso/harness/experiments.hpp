#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "taso/harness/planted.hpp"
#include "taso/lora/report.hpp"
#include "taso/lora/trainer.hpp"

namespace taso {

// ---- ablation ---------------------------------------------------------------

inline const std::vector<std::string>& ablation_arms() {
  static const std::vector<std::string> arms{"taso", "taso_no_lr", "taso_random_region"};
  return arms;
}

struct AblationRow {
  std::string arm;
  double mean_eval = 0.0;
  double delta_vs_taso = 0.0;  // mean_eval - mean_eval(taso)
  std::size_t below_taso = 0;  // seeds where this arm scored strictly below taso
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<RunReport>> reports;  // arm -> one report per seed
  std::vector<AblationRow> table;
};

/// Every arm on a fresh planted task per seed; config.seed is set to the seed.
AblationResult run_ablation(const PlantedTaskSpec& task, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds);

// ---- p sweep ----------------------------------------------------------------

struct SweepPoint {
  double p_fraction = 0.0;
  double eval_metric = 0.0;
  std::size_t trainable = 0;
  double rho_row = 0.0;
  double rho_col = 0.0;
};

/// One TASO run per p on a copy of task.base, all with config.seed.
std::vector<SweepPoint> sweep_p(const PlantedTask& task, const TrainConfig& config,
                                const std::vector<double>& p_list);
std::vector<SweepPoint> sweep_p(const TinyModel& base, const Dataset& train, const Dataset& eval,
                                const TrainConfig& config, const std::vector<double>& p_list);

// ---- composition ------------------------------------------------------------

/// Per-layer merged update, keyed by layer index.
using DeltaSet = std::map<std::size_t, Matrix>;

/// after.layer(i).weight() - before.layer(i).weight() for every adapter target.
DeltaSet extract_delta(const TinyModel& before, const TinyModel& after);

struct CompositionScore {
  double first = 0.0;   // metric on the first task's eval split
  double second = 0.0;  // metric on the second task's eval split
  double mean = 0.0;    // unweighted mean of the two
};

/// Evaluates base + first + second on both eval splits.
CompositionScore compose_tasks(const TinyModel& base, const DeltaSet& first,
                               const DeltaSet& second, const Dataset& eval_first,
                               const Dataset& eval_second);

struct CompositionRow {
  std::string base_task;  // "A" or "B": whose dense module is fixed
  std::string second;     // "dense" or "pruned"
  CompositionScore score;
};

struct CompositionResult {
  std::uint64_t seed = 0;
  std::vector<CompositionRow> rows;  // (A, dense), (A, pruned), (B, dense), (B, pruned)
};

/// Dense LoRA (rank `dense_rank`) and TASO modules trained once per task of a
/// disjoint planted pair, then composed in both orders.
CompositionResult run_composition(const PlantedTaskSpec& task, const TrainConfig& config,
                                  std::size_t dense_rank, std::uint64_t seed);

// ---- serialization ----------------------------------------------------------

nlohmann::json to_json(const AblationResult& result);
nlohmann::json to_json(const std::vector<SweepPoint>& curve);
nlohmann::json to_json(const CompositionResult& result);

// CSV: ',' separated, '\n' terminated, header row only when requested.
void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result,
                        bool header);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& curve,
                     bool header);
/// seed,base_task,second,first_metric,second_metric,mean
void write_composition_csv(const std::filesystem::path& path,
                           const std::vector<CompositionResult>& results, bool header);
/// round,stage,epoch,loss for every recorded epoch of the report.
void write_curve_csv(const std::filesystem::path& path, const RunReport& report, bool header);

}  // namespace taso
