#include "taso/harness/planted.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "taso/tensor/random.hpp"

namespace taso {

namespace {

Matrix outer(const Matrix& u, const Matrix& v) {
  Matrix out(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  return out;
}

// Random signs on `keep`, zero elsewhere. The support entry of random rank k
// has magnitude (k + 1)^-power.
Matrix signed_profile(std::size_t n, const std::vector<std::size_t>& keep, double power, Rng& rng) {
  std::vector<std::size_t> rank(keep.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::bernoulli_distribution coin(0.5);
  Matrix out(n, 1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const double magnitude = std::pow(static_cast<double>(rank[k] + 1), -power);
    out[keep[k]] = coin(rng) ? magnitude : -magnitude;
  }
  return out;
}

void rescale_to(Matrix& m, double norm) {
  const double current = frobenius_norm(m);
  if (current > 0.0) m = (norm / current) * m;
}

}  // namespace

Dataset sample_teacher(const TinyModel& teacher, std::size_t count, double input_std,
                       double noise, std::uint64_t seed) {
  require(count > 0, "planted task: example count must be positive");
  Rng rng(seed);
  Dataset data;
  data.features = gaussian_matrix(count, teacher.input_width(), input_std, rng);
  const Matrix out = forward(teacher, data.features);
  if (teacher.loss_kind() == LossKind::kCrossEntropy) {
    data.targets = Matrix(count, 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any(0, out.cols() - 1);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < out.cols(); ++c)
        if (out(i, c) > out(i, best)) best = c;
      if (noise > 0.0 && coin(rng) < noise) best = any(rng);
      data.targets(i, 0) = static_cast<double>(best);
    }
  } else {
    data.targets = out;
    if (noise > 0.0) data.targets = data.targets + gaussian_matrix(count, out.cols(), noise, rng);
  }
  return data;
}

namespace {

void validate(const PlantedTaskSpec& spec) {
  require(spec.delta_scale >= 0.0, "planted task: delta_scale must be non-negative");
  require(spec.input_std > 0.0, "planted task: input_std must be positive");
  require(spec.noise >= 0.0, "planted task: noise must be non-negative");
  require(spec.support_power >= 0.0, "planted task: support_power must be non-negative");
  require(spec.support_fraction > 0.0 && spec.support_fraction <= 1.0,
          "planted task: support_fraction must lie in (0, 1]");
  require(spec.row_share >= 0.0 && spec.row_share <= 1.0,
          "planted task: row_share must lie in [0, 1]");
}

// Random support avoiding `taken`'s rows and columns.
CoreRegion draw_support(const PlantedTaskSpec& spec, std::size_t p, std::size_t q,
                        const CoreRegion& taken, std::uint64_t seed) {
  std::vector<std::size_t> r, c;
  for (std::size_t i = 0; i < p; ++i)
    if (!taken.contains_row(i)) r.push_back(i);
  for (std::size_t j = 0; j < q; ++j)
    if (!taken.contains_col(j)) c.push_back(j);
  const std::size_t total = fraction_count(spec.support_fraction, p + q);
  const auto n_rows = std::min<std::size_t>(
      r.size(), static_cast<std::size_t>(std::llround(spec.row_share * static_cast<double>(total))));
  const std::size_t n_cols = total - n_rows;
  require(n_cols <= c.size(), "planted task: not enough free rows and columns for the support");
  Rng rng(seed);
  std::shuffle(r.begin(), r.end(), rng);
  std::shuffle(c.begin(), c.end(), rng);
  CoreRegion support;
  support.rows.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_rows));
  support.cols.assign(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n_cols));
  std::sort(support.rows.begin(), support.rows.end());
  std::sort(support.cols.begin(), support.cols.end());
  return support;
}

PlantedTask plant(const TinyModel& base_model, const PlantedTaskSpec& spec, CoreRegion support,
                  std::uint64_t seed) {
  TinyModel base = base_model;
  require(spec.layer < base.layer_count(), "planted task: layer index out of range");
  const FrozenLinear& lin = base.layer(spec.layer);
  const std::size_t p = lin.out_features();
  const std::size_t q = lin.in_features();

  std::sort(support.rows.begin(), support.rows.end());
  std::sort(support.cols.begin(), support.cols.end());
  for (std::size_t i : support.rows) require(i < p, "planted task: row index out of range");
  for (std::size_t j : support.cols) require(j < q, "planted task: column index out of range");
  require(std::adjacent_find(support.rows.begin(), support.rows.end()) == support.rows.end() &&
              std::adjacent_find(support.cols.begin(), support.cols.end()) == support.cols.end(),
          "planted task: duplicate support index");
  support.p_fraction = static_cast<double>(support.size()) / static_cast<double>(p + q);

  Rng rng(derive_seed(seed, {3}));
  const std::size_t parts = (support.rows.empty() ? 0 : 1) + (support.cols.empty() ? 0 : 1);
  const double part_norm =
      parts ? spec.delta_scale * frobenius_norm(lin.weight()) / std::sqrt(static_cast<double>(parts))
            : 0.0;
  Matrix delta(p, q);
  if (!support.rows.empty()) {
    Matrix row_part = outer(signed_profile(p, support.rows, spec.support_power, rng),
                            gaussian_matrix(q, 1, 1.0, rng));
    rescale_to(row_part, part_norm);
    delta = delta + row_part;
  }
  if (!support.cols.empty()) {
    Matrix col_part = outer(gaussian_matrix(p, 1, 1.0, rng),
                            signed_profile(q, support.cols, spec.support_power, rng));
    rescale_to(col_part, part_norm);
    delta = delta + col_part;
  }

  base.set_adapter_targets({spec.layer});
  TinyModel teacher = base;
  teacher.layer(spec.layer).apply_delta(delta);

  PlantedTask task{base, teacher, spec.layer, support, delta, {}, {}};
  task.train = sample_teacher(teacher, spec.train_count, spec.input_std, spec.noise,
                              derive_seed(seed, {4}));
  task.eval = sample_teacher(teacher, spec.eval_count, spec.input_std, spec.noise,
                             derive_seed(seed, {5}));
  return task;
}

TinyModel planted_base(const PlantedTaskSpec& spec, std::uint64_t seed) {
  return build_tiny_classifier(spec.widths, derive_seed(seed, {1}), spec.hidden_activation,
                               spec.loss);
}

}  // namespace

PlantedTask generate_planted_task(const PlantedTaskSpec& spec, std::uint64_t seed) {
  validate(spec);
  const TinyModel base = planted_base(spec, seed);
  require(spec.layer < base.layer_count(), "planted task: layer index out of range");
  CoreRegion support;
  if (spec.rows.empty() && spec.cols.empty()) {
    const FrozenLinear& lin = base.layer(spec.layer);
    support = draw_support(spec, lin.out_features(), lin.in_features(), {}, derive_seed(seed, {2}));
  } else {
    support.rows = spec.rows;
    support.cols = spec.cols;
  }
  return plant(base, spec, std::move(support), seed);
}

PlantedPair generate_planted_pair(const PlantedTaskSpec& spec, std::uint64_t seed) {
  validate(spec);
  require(spec.rows.empty() && spec.cols.empty(),
          "planted pair: supports are drawn, explicit indices are not supported");
  const TinyModel base = planted_base(spec, seed);
  require(spec.layer < base.layer_count(), "planted task: layer index out of range");
  const FrozenLinear& lin = base.layer(spec.layer);
  const std::size_t p = lin.out_features();
  const std::size_t q = lin.in_features();
  CoreRegion first = draw_support(spec, p, q, {}, derive_seed(seed, {2}));
  CoreRegion second = draw_support(spec, p, q, first, derive_seed(seed, {6}));
  PlantedTask a = plant(base, spec, std::move(first), seed);
  PlantedTask b = plant(base, spec, std::move(second), derive_seed(seed, {7}));
  return PlantedPair{std::move(a), std::move(b)};
}

}  // namespace taso
