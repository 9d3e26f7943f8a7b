#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "taso/importance/selection.hpp"
#include "taso/models/dataset.hpp"
#include "taso/models/model.hpp"

namespace taso {

enum class ImportanceMetric {
  kSensitivity,  // |theta * g|
  kGradient,     // |g|
};

enum class GradientAggregation {
  kMeanGradient,     // score the mean gradient over all batches
  kSumBatchScores,   // sum of per-batch scores
};

std::string_view to_string(ImportanceMetric m);
ImportanceMetric parse_metric(std::string_view name);
std::string_view to_string(GradientAggregation a);
GradientAggregation parse_aggregation(std::string_view name);

/// |theta ⊙ grad| entrywise.
Matrix sensitivity_from_gradient(const Matrix& theta, const Matrix& grad);
/// |grad| entrywise.
Matrix gradient_magnitude(const Matrix& grad);

/// Task-loss gradient w.r.t. the target layer's W0, averaged over batches.
/// Adapters attached to the model are part of the forward pass but stay frozen.
Matrix mean_weight_gradient(const TinyModel& model, std::span<const Dataset> batches,
                            std::size_t target);

ImportanceMap score_layer(const TinyModel& model, std::span<const Dataset> batches,
                          std::size_t target, ImportanceMetric metric,
                          GradientAggregation aggregation = GradientAggregation::kMeanGradient);

ImportanceMap sensitivity_scores(const TinyModel& model, std::span<const Dataset> batches,
                                 std::size_t target,
                                 GradientAggregation aggregation = GradientAggregation::kMeanGradient);
ImportanceMap gradient_scores(const TinyModel& model, std::span<const Dataset> batches,
                              std::size_t target,
                              GradientAggregation aggregation = GradientAggregation::kMeanGradient);

/// Full chain: scores -> top-k mask -> densities -> core region.
struct RegionSelection {
  ImportanceMap importance;
  BinaryMask mask;
  Density density;
  CoreRegion region;
};

RegionSelection select_region(const TinyModel& model, std::span<const Dataset> batches,
                              std::size_t target, double k, double p_fraction,
                              ImportanceMetric metric,
                              GradientAggregation aggregation = GradientAggregation::kMeanGradient);

}  // namespace taso
