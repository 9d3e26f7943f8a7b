#pragma once

#include <cstddef>

#include "taso/lora/report.hpp"
#include "taso/lora/trainer.hpp"

namespace taso {

/// Unmasked rank-r adapters on every target, trained for config.epochs and
/// merged at the end. config.rank is ignored in favour of `rank`.
RunReport dense_lora_finetune(TinyModel& model, const Dataset& train, const Dataset& eval,
                              std::size_t rank, const TrainConfig& config);

}  // namespace taso
