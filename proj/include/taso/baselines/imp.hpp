#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "taso/lora/report.hpp"
#include "taso/lora/trainer.hpp"

namespace taso {

/// s_t = 1 - (1 - target)^(t / n) for t = 1..n; s_n == target exactly.
std::vector<double> imp_schedule(double target_sparsity, std::size_t n_iterations);

/// Lottery-ticket pruning of rank-r LoRA adapters.
///
/// Dense training first, then n_iterations rounds of: prune the smallest
/// surviving |entries| of each adapter (left and right pooled) up to
/// ceil(s_t N), rewind survivors to their initial values, retrain for
/// config.epochs. Each adapter prunes locally. Stage t of the report carries
/// the sparsity after iteration t.
/// Sees each adapter right after it is rewound, before that iteration trains.
using ImpRewindHook =
    std::function<void(std::size_t iteration, std::size_t layer, const SparseLoraModule&)>;

RunReport imp_lora(TinyModel& model, const Dataset& train, const Dataset& eval, std::size_t rank,
                   double target_sparsity, std::size_t n_iterations, const TrainConfig& config,
                   const ImpRewindHook& on_rewind = {});

}  // namespace taso
