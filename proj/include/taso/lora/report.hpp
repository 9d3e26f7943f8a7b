#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taso/lora/trainer.hpp"

namespace taso {

struct LayerStageReport {
  std::size_t layer = 0;
  std::string name;
  double rho = 0.0;
  double lr = 0.0;
  std::size_t trainable = 0;
  std::vector<std::size_t> support;
  bool skipped = false;  // empty region for this stage
};

struct StageReport {
  std::string stage;
  std::vector<double> loss_curve;
  double eval_metric = 0.0;
  double rho = 0.0;  // mean over trained layers
  std::size_t trainable = 0;
  std::size_t epochs = 0;
  std::optional<double> sparsity;  // IMP: pruned fraction of adapter entries
  std::vector<LayerStageReport> layers;
};

struct RegionReport {
  std::size_t layer = 0;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<RegionReport> regions;
  std::vector<StageReport> stages;
};

struct RunReport {
  std::string arm;
  std::string metric;  // "accuracy" or "mse"
  std::uint64_t seed = 0;
  double base_eval = 0.0;
  double final_eval = 0.0;
  std::size_t trainable = 0;  // summed over every trained stage
  std::size_t total_epochs = 0;
  double sparsity = 0.0;
  double wall_clock_seconds = 0.0;
  std::vector<RoundReport> rounds;
  nlohmann::json config;
};

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

/// Drops wall-clock fields so two runs can be compared byte for byte.
nlohmann::json without_wall_clock(nlohmann::json j);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace taso
