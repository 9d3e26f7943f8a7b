#pragma once

#include <string_view>

#include "taso/baselines/dare.hpp"
#include "taso/baselines/dense_lora.hpp"
#include "taso/baselines/imp.hpp"
#include "taso/baselines/random_region.hpp"
#include "taso/lora/pipeline.hpp"

namespace taso {

/// Pipeline options for the TASO-family arms:
/// taso, taso_no_lr, taso_random_region, dare.
struct ArmSetup {
  TasoOptions options;
  TrainConfig config;
};
ArmSetup taso_arm(std::string_view arm, const TrainConfig& config);

}  // namespace taso
