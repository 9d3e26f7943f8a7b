#include <string>

#include "taso/baselines/baselines.hpp"

namespace taso {

ArmSetup taso_arm(std::string_view arm, const TrainConfig& config) {
  ArmSetup setup{TasoOptions{}, config};
  setup.options.arm = std::string(arm);
  if (arm == "taso") return setup;
  if (arm == "taso_no_lr") {
    setup.config.lr_scaling = false;
    return setup;
  }
  if (arm == "taso_random_region") {
    setup.options.region_source = RegionSource::kRandom;
    return setup;
  }
  if (arm == "dare") {
    setup.config.lr_scaling = false;
    setup.options.dare_merge = true;
    return setup;
  }
  throw ContractError("unknown TASO arm '" + std::string(arm) + "'");
}

}  // namespace taso
