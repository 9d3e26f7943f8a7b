#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taso/harness/planted.hpp"
#include "taso/lora/trainer.hpp"

namespace taso {

/// One flat JSON document drives every subcommand. Unknown keys are rejected.
struct ExperimentConfig {
  TrainConfig train;
  PlantedTaskSpec task;
  std::optional<std::uint64_t> task_seed;  // defaults to train.seed

  std::string arm = "taso";
  std::size_t dense_rank = 8;
  double imp_target_sparsity = 0.9;
  std::size_t imp_iterations = 5;
  std::vector<std::uint64_t> seeds;  // ablate / compose; empty -> {train.seed}
  std::vector<double> p_list{0.02, 0.05, 0.10, 0.20, 0.40};
  bool csv_header = false;

  // CSV data instead of a planted task. Relative paths resolve against the
  // config file's directory.
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> eval_csv;
  std::optional<std::filesystem::path> model_dir;  // checkpoint; else built from task.widths
  std::optional<std::vector<std::size_t>> targets;

  std::uint64_t effective_task_seed() const { return task_seed.value_or(train.seed); }
  std::vector<std::uint64_t> effective_seeds() const;
};

ExperimentConfig parse_config(const nlohmann::json& j,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// "0.02,0.05" -> {0.02, 0.05}
std::vector<double> parse_float_list(const std::string& text);

/// Base model plus splits for a run: the planted task, or CSV data with a
/// checkpointed or freshly built base.
struct TaskData {
  TinyModel base;
  Dataset train;
  Dataset eval;
  std::optional<PlantedTask> planted;
};
TaskData load_task(const ExperimentConfig& config);

}  // namespace taso
