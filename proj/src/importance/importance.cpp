#include "taso/importance/importance.hpp"

#include <cmath>
#include <string>

namespace taso {

std::string_view to_string(ImportanceMetric m) {
  return m == ImportanceMetric::kSensitivity ? "sensitivity" : "gradient";
}

ImportanceMetric parse_metric(std::string_view name) {
  if (name == "sensitivity") return ImportanceMetric::kSensitivity;
  if (name == "gradient") return ImportanceMetric::kGradient;
  throw ContractError("unknown importance metric '" + std::string(name) + "'");
}

std::string_view to_string(GradientAggregation a) {
  return a == GradientAggregation::kMeanGradient ? "mean_gradient" : "sum_batch_scores";
}

GradientAggregation parse_aggregation(std::string_view name) {
  if (name == "mean_gradient") return GradientAggregation::kMeanGradient;
  if (name == "sum_batch_scores") return GradientAggregation::kSumBatchScores;
  throw ContractError("unknown gradient aggregation '" + std::string(name) + "'");
}

Matrix sensitivity_from_gradient(const Matrix& theta, const Matrix& grad) {
  if (!theta.same_shape(grad))
    throw ShapeError("sensitivity: weight " + theta.shape() + " vs gradient " + grad.shape());
  Matrix s(theta.rows(), theta.cols());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::abs(theta[i] * grad[i]);
  return s;
}

Matrix gradient_magnitude(const Matrix& grad) {
  Matrix s = grad;
  for (double& v : s.data()) v = std::abs(v);
  return s;
}

namespace {

Matrix batch_gradient(const TinyModel& model, const Dataset& batch, std::size_t target,
                      std::size_t batch_index) {
  ad::Tape tape;
  TapeBinding binding;
  binding.observed_layer = target;
  ad::Var out = forward(model, tape, batch.features, binding);
  ad::Var loss = task_loss(model, out, batch.targets);
  if (!std::isfinite(ad::scalar(loss)))
    throw NumericError("non-finite loss in importance batch " + std::to_string(batch_index));
  ad::GradientMap grads = tape.backward(loss);
  return std::move(grads.at(weight_id(model.layer(target))));
}

Matrix score(const Matrix& theta, const Matrix& grad, ImportanceMetric metric) {
  return metric == ImportanceMetric::kSensitivity ? sensitivity_from_gradient(theta, grad)
                                                  : gradient_magnitude(grad);
}

std::size_t count_samples(std::span<const Dataset> batches) {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

}  // namespace

Matrix mean_weight_gradient(const TinyModel& model, std::span<const Dataset> batches,
                            std::size_t target) {
  require(!batches.empty(), "importance: no data batches");
  const Matrix& theta = model.layer(target).weight();
  Matrix acc(theta.rows(), theta.cols());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    require(batches[b].size() > 0, "importance: empty batch");
    acc = acc + batch_gradient(model, batches[b], target, b);
  }
  return (1.0 / static_cast<double>(batches.size())) * acc;
}

ImportanceMap score_layer(const TinyModel& model, std::span<const Dataset> batches,
                          std::size_t target, ImportanceMetric metric,
                          GradientAggregation aggregation) {
  require(!batches.empty(), "importance: no data batches");
  const Matrix& theta = model.layer(target).weight();
  ImportanceMap out;
  out.sample_count = count_samples(batches);
  if (aggregation == GradientAggregation::kMeanGradient) {
    out.scores = score(theta, mean_weight_gradient(model, batches, target), metric);
    return out;
  }
  out.scores = Matrix(theta.rows(), theta.cols());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    require(batches[b].size() > 0, "importance: empty batch");
    out.scores = out.scores + score(theta, batch_gradient(model, batches[b], target, b), metric);
  }
  return out;
}

ImportanceMap sensitivity_scores(const TinyModel& model, std::span<const Dataset> batches,
                                 std::size_t target, GradientAggregation aggregation) {
  return score_layer(model, batches, target, ImportanceMetric::kSensitivity, aggregation);
}

ImportanceMap gradient_scores(const TinyModel& model, std::span<const Dataset> batches,
                              std::size_t target, GradientAggregation aggregation) {
  return score_layer(model, batches, target, ImportanceMetric::kGradient, aggregation);
}

RegionSelection select_region(const TinyModel& model, std::span<const Dataset> batches,
                              std::size_t target, double k, double p_fraction,
                              ImportanceMetric metric, GradientAggregation aggregation) {
  RegionSelection sel;
  sel.importance = score_layer(model, batches, target, metric, aggregation);
  sel.mask = topk_mask(sel.importance, k);
  sel.density = density(sel.mask);
  sel.region = select_core_region(sel.density, p_fraction);
  return sel;
}

}  // namespace taso
