#pragma once

#include <filesystem>

#include "taso/models/model.hpp"

namespace taso {

// A checkpoint is a directory with manifest.txt plus one TSR1 file per tensor:
// <layer>.weight.tsr, <layer>.bias.tsr and, for attached adapters,
// <layer>.left.tsr, <layer>.right.tsr, <layer>.left_mask.tsr,
// <layer>.right_mask.tsr. The manifest lists blocks in forward order, every
// layer's shape, and adapter attachment.
void save_checkpoint(const std::filesystem::path& dir, const TinyModel& model);
TinyModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace taso
