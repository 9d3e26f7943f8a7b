#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "taso/importance/selection.hpp"
#include "taso/lora/report.hpp"
#include "taso/lora/trainer.hpp"
#include "taso/models/dataset.hpp"
#include "taso/models/model.hpp"

namespace taso {

enum class RegionSource {
  kImportance,  // sensitivity or gradient scores on the training set
  kRandom,      // uniformly random rows and columns, same cardinality
  kOracle,      // caller-provided regions keyed by layer index
};

struct TasoOptions {
  std::string arm = "taso";
  RegionSource region_source = RegionSource::kImportance;
  std::map<std::size_t, CoreRegion> oracle_regions;
  // Merge dare_rescale(delta, rho) instead of the raw delta.
  bool dare_merge = false;
  // Called with each trained adapter just before it is merged.
  std::function<void(std::size_t round, std::size_t layer, const SparseLoraModule&,
                     const CoreRegion&)>
      on_adapter;
};

/// Row stage then column stage per round, each merged into W0 before the next.
/// Every adapter target of `model` is trained; layers whose region is empty
/// for a stage sit that stage out.
RunReport taso_finetune(TinyModel& model, const Dataset& train, const Dataset& eval,
                        const TrainConfig& config, const TasoOptions& options = {});

/// Regions for every adapter target under the given source.
std::map<std::size_t, CoreRegion> compute_regions(const TinyModel& model, const Dataset& train,
                                                  const TrainConfig& config,
                                                  const TasoOptions& options, std::size_t round);

std::string metric_name(const TinyModel& model);

}  // namespace taso
