#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "taso/lora/pipeline.hpp"
#include "taso/tensor/errors.hpp"

using namespace taso;
using taso::test::naive_matmul;
using taso::test::random_matrix;
using taso::test::random_size;

namespace {

TinyModel linear_model(Matrix w) {
  const std::size_t q = w.cols();
  std::vector<Block> blocks;
  blocks.emplace_back(DenseBlock{FrozenLinear("dense0", std::move(w)), Activation::kIdentity});
  return TinyModel(q, std::move(blocks), LossKind::kMeanSquared);
}

CoreRegion region_of(std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  CoreRegion r;
  r.rows = std::move(rows);
  r.cols = std::move(cols);
  return r;
}

// Regression data from a random teacher perturbation of `model`.
Dataset teacher_data(const TinyModel& model, std::size_t n, Rng& rng) {
  TinyModel teacher = model;
  for (std::size_t l = 0; l < teacher.layer_count(); ++l) {
    const Matrix& w = teacher.layer(l).weight();
    teacher.layer(l).apply_delta(random_matrix(w.rows(), w.cols(), rng, 0.3));
  }
  const Matrix x = random_matrix(n, model.input_width(), rng);
  return Dataset{x, forward(teacher, x)};
}

TrainConfig sgd_config(std::size_t epochs, double lr) {
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.epochs = epochs;
  c.base_lr = lr;
  return c;
}

}  // namespace

TEST_CASE("fresh adapters have zero delta and documented masks") {
  const SparseLoraModule a = init_adapter(4, 3, 1, Stage::kRow, region_of({1, 3}, {}), 9);
  CHECK(effective_delta(a) == Matrix(4, 3));
  CHECK(a.rho == 0.5);
  REQUIRE(a.left_mask);
  CHECK(*a.left_mask == Matrix{{0}, {1}, {0}, {1}});
  CHECK_FALSE(a.right_mask);
  CHECK(a.support == std::vector<std::size_t>{1, 3});
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : a.right.data()) CHECK(std::abs(v) <= bound);

  const SparseLoraModule b = init_adapter(4, 3, 1, Stage::kRow, region_of({1, 3}, {}), 9);
  CHECK(a.right == b.right);
  CHECK(init_adapter(4, 3, 1, Stage::kRow, region_of({1, 3}, {}), 10).right != a.right);

  CHECK_THROWS_AS(init_adapter(4, 3, 1, Stage::kRow, region_of({}, {0}), 1), ContractError);
  CHECK_THROWS_AS(init_adapter(4, 3, 1, Stage::kColumn, region_of({0}, {}), 1), ContractError);
  CHECK_THROWS_AS(init_adapter(4, 3, 1, Stage::kRow, region_of({4}, {}), 1), ContractError);
  CHECK_THROWS_AS(init_dense_adapter(4, 3, 0, 1), ContractError);
}

TEST_CASE("effective_delta examples") {
  SparseLoraModule dense = init_dense_adapter(2, 2, 1, 0);
  dense.left = Matrix{{1}, {2}};
  dense.right = Matrix{{3, 4}};
  CHECK(effective_delta(dense) == Matrix{{3, 4}, {6, 8}});

  SparseLoraModule row = init_adapter(2, 2, 1, Stage::kRow, region_of({0}, {}), 0);
  row.left = dense.left;
  row.right = dense.right;
  CHECK(effective_delta(row) == Matrix{{3, 4}, {0, 0}});

  SparseLoraModule col = init_adapter(2, 2, 1, Stage::kColumn, region_of({}, {1}), 0);
  col.left = dense.left;
  col.right = dense.right;
  CHECK(effective_delta(col) == Matrix{{0, 4}, {0, 8}});
}

TEST_CASE("pruning ratio, lr scaling and trainable counts") {
  std::vector<std::size_t> ten(10);
  for (std::size_t i = 0; i < 10; ++i) ten[i] = i;
  CHECK(pruning_ratio(region_of(ten, {}), Stage::kRow, 100, 5) == doctest::Approx(0.9));
  CHECK(pruning_ratio(region_of({}, {0, 1}), Stage::kColumn, 3, 8) == 0.75);
  CHECK(pruning_ratio(region_of({0, 1}, {}), Stage::kRow, 2, 8) == 0.0);
  CHECK(pruning_ratio(region_of({}, {}), Stage::kDense, 2, 8) == 0.0);

  CHECK(scaled_lr(0.01, 0.0) == 0.01);
  CHECK(lr_scale_factor(0.75) == 2.0);
  CHECK(lr_scale_factor(0.9) == doctest::Approx(3.16228).epsilon(1e-6));
  CHECK_THROWS_AS(scaled_lr(0.01, 1.0), ContractError);
  CHECK_THROWS_AS(scaled_lr(0.01, -0.1), ContractError);

  CHECK(count_trainable(Stage::kRow, 64, 64, 1, 6) == 70);
  CHECK(count_trainable(Stage::kDense, 64, 64, 8, 0) == 1024);
  CHECK(count_trainable(Stage::kColumn, 64, 64, 1, 64) == count_trainable(Stage::kDense, 64, 64, 1, 0));
  const SparseLoraModule a = init_adapter(5, 7, 2, Stage::kColumn, region_of({}, {1, 2, 6}), 0);
  CHECK(count_trainable(a) == 5 * 2 + 2 * 3);
}

TEST_CASE("factor scaling identity") {
  Rng rng(41);
  for (double rho : {0.0, 0.5, 0.75, 0.9, 0.99}) {
    const double s = lr_scale_factor(rho);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t p = random_size(rng, 1, 8), q = random_size(rng, 1, 8),
                        r = random_size(rng, 1, 3);
      const Matrix left = random_matrix(p, r, rng);
      const Matrix right = random_matrix(r, q, rng);
      const Matrix scaled = naive_matmul(s * left, s * right);
      const Matrix expected = (1.0 / (1.0 - rho)) * naive_matmul(left, right);
      CHECK(relative_error(scaled, expected) <= 1e-12);
    }
  }
}

TEST_CASE("zero epochs leave adapters at initialization") {
  Rng rng(42);
  TinyModel model = linear_model(random_matrix(4, 3, rng));
  const Dataset data = teacher_data(model, 8, rng);
  const SparseLoraModule init = init_adapter(4, 3, 1, Stage::kRow, region_of({0, 2}, {}), 5);
  model.layer(0).attach(init);
  const std::vector<StageTarget> targets{{0, 0.1}};
  const StageResult r = train_stage(model, targets, data, sgd_config(0, 0.1), 0);
  CHECK(r.epochs == 0);
  CHECK(r.loss_curve.empty());
  CHECK(model.layer(0).adapter().right == init.right);
  CHECK(effective_delta(model.layer(0).adapter()) == Matrix(4, 3));
}

TEST_CASE("one SGD step on a row mask equals the row-restricted dense problem") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = random_size(rng, 3, 8), q = random_size(rng, 2, 6);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < p; ++i)
      if (rng() % 2) rows.push_back(i);
    if (rows.empty()) rows.push_back(p - 1);
    const Matrix w0 = random_matrix(p, q, rng);
    const Matrix x = random_matrix(10, q, rng);
    const Matrix y = random_matrix(10, p, rng);
    const std::uint64_t seed = rng();
    const double lr = 0.05;

    TinyModel full = linear_model(w0);
    SparseLoraModule a = init_adapter(p, q, 1, Stage::kRow, region_of(rows, {}), seed);
    a.left = random_matrix(p, 1, rng);  // nonzero so both factors move
    full.layer(0).attach(a);
    AdapterTrainer tf(full, {{0, lr}}, sgd_config(1, lr), 0);
    tf.step(Dataset{x, y});

    Matrix w_sub(rows.size(), q), y_sub(10, rows.size()), left_sub(rows.size(), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t j = 0; j < q; ++j) w_sub(k, j) = w0(rows[k], j);
      for (std::size_t n = 0; n < 10; ++n) y_sub(n, k) = y(n, rows[k]);
      left_sub(k, 0) = a.left(rows[k], 0);
    }
    TinyModel sub = linear_model(w_sub);
    SparseLoraModule b = init_dense_adapter(rows.size(), q, 1, seed);
    b.left = left_sub;
    sub.layer(0).attach(b);
    // MSE averages over p outputs in the full problem and |R| in the reduced one.
    const double sub_lr = lr * static_cast<double>(rows.size()) / static_cast<double>(p);
    AdapterTrainer ts(sub, {{0, sub_lr}}, sgd_config(1, sub_lr), 0);
    ts.step(Dataset{x, y_sub});

    const SparseLoraModule& fa = full.layer(0).adapter();
    const SparseLoraModule& sa = sub.layer(0).adapter();
    CHECK(relative_error(fa.right, sa.right) <= 1e-10);
    for (std::size_t k = 0; k < rows.size(); ++k)
      CHECK(std::abs(fa.left(rows[k], 0) - sa.left(k, 0)) <= 1e-10);
  }
}

TEST_CASE("masked entries keep zero gradient, zero Adam state and zero delta") {
  Rng rng(44);
  for (Stage stage : {Stage::kRow, Stage::kColumn}) {
    TinyModel model = build_tiny_classifier({5, 6, 4}, 7, Activation::kRelu, LossKind::kMeanSquared);
    const Matrix w0_before = model.layer(0).weight();
    const Dataset data = teacher_data(model, 24, rng);
    const CoreRegion region = region_of({1, 4}, {0, 3});
    model.layer(0).attach(init_adapter(6, 5, 2, stage, region, 3));
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.base_lr = 0.02;
    AdapterTrainer trainer(model, {{0, 0.02}}, cfg, 1);
    for (int e = 0; e < 5; ++e) trainer.run_epoch(data);

    const FrozenLinear& lin = model.layer(0);
    CHECK(lin.weight() == w0_before);
    const SparseLoraModule& a = lin.adapter();
    const Matrix delta = effective_delta(a);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        const bool inside = stage == Stage::kRow ? region.contains_row(i) : region.contains_col(j);
        if (!inside) REQUIRE(delta(i, j) == 0.0);
      }
    const ad::TensorId id = stage == Stage::kRow ? left_id(lin) : right_id(lin);
    const Matrix& mask = stage == Stage::kRow ? *a.left_mask : *a.right_mask;
    const Matrix* m1 = trainer.optimizer().first_moment(id);
    const Matrix* m2 = trainer.optimizer().second_moment(id);
    REQUIRE(m1);
    REQUIRE(m2);
    std::size_t live = 0;
    for (std::size_t e = 0; e < mask.size(); ++e) {
      if (mask[e] == 0.0) {
        CHECK((*m1)[e] == 0.0);
        CHECK((*m2)[e] == 0.0);
      } else {
        live += (*m2)[e] > 0.0;
      }
    }
    CHECK(live > 0);
  }
}

TEST_CASE("non-finite training loss names the batch") {
  Rng rng(45);
  TinyModel model = linear_model(random_matrix(3, 3, rng, 1e150));
  const Dataset data{random_matrix(4, 3, rng, 1e160), random_matrix(4, 3, rng)};
  model.layer(0).attach(init_dense_adapter(3, 3, 1, 1));
  AdapterTrainer t(model, {{0, 0.1}}, sgd_config(1, 0.1), 0);
  try {
    t.step(data, 7);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch 7") != std::string::npos);
  }
}

TEST_CASE("train_stage rejects bad targets") {
  TinyModel model = linear_model(Matrix::identity(2));
  const Dataset data{Matrix(2, 2), Matrix(2, 2)};
  const std::vector<StageTarget> targets{{0, 0.1}};
  CHECK_THROWS_AS(train_stage(model, targets, data, sgd_config(1, 0.1), 0), ContractError);
  model.layer(0).attach(init_dense_adapter(2, 2, 1, 0));
  const std::vector<StageTarget> bad_lr{{0, 0.0}};
  CHECK_THROWS_AS(train_stage(model, bad_lr, data, sgd_config(1, 0.1), 0), ContractError);
}

namespace {

struct Fixture {
  TinyModel model;
  Dataset train;
  Dataset eval;
};

Fixture regression_fixture(std::uint64_t seed) {
  Rng rng(seed);
  TinyModel model = build_tiny_classifier({6, 8, 3}, seed, Activation::kRelu, LossKind::kMeanSquared);
  Dataset train = teacher_data(model, 48, rng);
  Dataset eval = teacher_data(model, 16, rng);
  return {std::move(model), std::move(train), std::move(eval)};
}

TrainConfig small_config() {
  TrainConfig c;
  c.base_lr = 0.01;
  c.epochs = 3;
  c.batch_size = 16;
  c.k = 0.2;
  c.p_fraction = 0.3;
  return c;
}

}  // namespace

TEST_CASE("taso_finetune epoch accounting and report shape") {
  Fixture f = regression_fixture(46);
  TrainConfig cfg = small_config();
  cfg.rounds = 2;
  TinyModel model = f.model;
  const RunReport r = taso_finetune(model, f.train, f.eval, cfg);
  CHECK(r.total_epochs == 2 * 2 * 3);
  REQUIRE(r.rounds.size() == 2);
  for (const RoundReport& round : r.rounds) {
    REQUIRE(round.stages.size() == 2);
    CHECK(round.stages[0].stage == "row");
    CHECK(round.stages[1].stage == "column");
    CHECK(round.regions.size() == model.adapter_targets().size());
    for (const StageReport& s : round.stages) CHECK(s.loss_curve.size() == 3);
  }
  CHECK(r.metric == "mse");
  CHECK(r.final_eval == r.rounds.back().stages.back().eval_metric);
  for (std::size_t l = 0; l < model.layer_count(); ++l) CHECK_FALSE(model.layer(l).has_adapter());
}

TEST_CASE("learning rates follow sqrt(1/(1-rho)) per layer unless disabled") {
  Fixture f = regression_fixture(47);
  TrainConfig cfg = small_config();
  TinyModel a = f.model;
  const RunReport scaled = taso_finetune(a, f.train, f.eval, cfg);
  for (const StageReport& s : scaled.rounds[0].stages)
    for (const LayerStageReport& l : s.layers) {
      if (l.skipped) continue;
      CHECK(l.lr == doctest::Approx(cfg.base_lr / std::sqrt(1.0 - l.rho)).epsilon(1e-15));
    }
  cfg.lr_scaling = false;
  TinyModel b = f.model;
  const RunReport plain = taso_finetune(b, f.train, f.eval, cfg);
  for (const StageReport& s : plain.rounds[0].stages)
    for (const LayerStageReport& l : s.layers)
      if (!l.skipped) CHECK(l.lr == cfg.base_lr);
}

TEST_CASE("final update lies on the union of every round's cross pattern") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Fixture f = regression_fixture(48 + seed);
    TrainConfig cfg = small_config();
    cfg.rounds = 4;
    cfg.seed = seed;
    TinyModel model = f.model;
    const RunReport r = taso_finetune(model, f.train, f.eval, cfg);
    for (std::size_t layer : model.adapter_targets()) {
      std::set<std::size_t> rows, cols;
      for (const RoundReport& round : r.rounds)
        for (const RegionReport& reg : round.regions)
          if (reg.layer == layer) {
            rows.insert(reg.rows.begin(), reg.rows.end());
            cols.insert(reg.cols.begin(), reg.cols.end());
          }
      const Matrix diff = model.layer(layer).weight() - f.model.layer(layer).weight();
      for (std::size_t i = 0; i < diff.rows(); ++i)
        for (std::size_t j = 0; j < diff.cols(); ++j)
          if (!rows.count(i) && !cols.count(j)) REQUIRE(diff(i, j) == 0.0);
    }
  }
}

TEST_CASE("layers whose stage region is empty sit the stage out") {
  Fixture f = regression_fixture(53);
  TrainConfig cfg = small_config();
  TasoOptions opt;
  opt.region_source = RegionSource::kOracle;
  opt.oracle_regions[0] = region_of({0, 5}, {});
  opt.oracle_regions[1] = region_of({}, {2});
  TinyModel model = f.model;
  const RunReport r = taso_finetune(model, f.train, f.eval, cfg, opt);
  const StageReport& row = r.rounds[0].stages[0];
  const StageReport& col = r.rounds[0].stages[1];
  CHECK_FALSE(row.layers[0].skipped);
  CHECK(row.layers[1].skipped);
  CHECK(col.layers[0].skipped);
  CHECK_FALSE(col.layers[1].skipped);
  CHECK(row.trainable == 2 + 6);
  CHECK(col.trainable == 3 + 1);
  CHECK(r.trainable == row.trainable + col.trainable);
  const Matrix d0 = model.layer(0).weight() - f.model.layer(0).weight();
  for (std::size_t j = 0; j < 6; ++j) CHECK(d0(1, j) == 0.0);

  TasoOptions missing;
  missing.region_source = RegionSource::kOracle;
  TinyModel m2 = f.model;
  CHECK_THROWS_AS(taso_finetune(m2, f.train, f.eval, cfg, missing), ContractError);
}

TEST_CASE("frozen regions repeat round zero; recomputed ones may move") {
  Fixture f = regression_fixture(54);
  TrainConfig cfg = small_config();
  cfg.rounds = 3;
  cfg.freeze_regions = true;
  TinyModel model = f.model;
  const RunReport r = taso_finetune(model, f.train, f.eval, cfg);
  for (const RoundReport& round : r.rounds)
    for (std::size_t i = 0; i < round.regions.size(); ++i) {
      CHECK(round.regions[i].rows == r.rounds[0].regions[i].rows);
      CHECK(round.regions[i].cols == r.rounds[0].regions[i].cols);
    }
}

TEST_CASE("random regions have the importance cardinality") {
  Fixture f = regression_fixture(55);
  TrainConfig cfg = small_config();
  TasoOptions opt;
  opt.region_source = RegionSource::kRandom;
  const auto random = compute_regions(f.model, f.train, cfg, opt, 0);
  const auto important = compute_regions(f.model, f.train, cfg, {}, 0);
  for (const auto& [layer, region] : important) CHECK(random.at(layer).size() == region.size());
}

TEST_CASE("reports are deterministic and round trip through JSON") {
  Fixture f = regression_fixture(56);
  TrainConfig cfg = small_config();
  cfg.seed = 99;
  TinyModel a = f.model;
  TinyModel b = f.model;
  const RunReport ra = taso_finetune(a, f.train, f.eval, cfg);
  const RunReport rb = taso_finetune(b, f.train, f.eval, cfg);
  CHECK(without_wall_clock(to_json(ra)).dump() == without_wall_clock(to_json(rb)).dump());
  for (std::size_t l = 0; l < a.layer_count(); ++l) CHECK(a.layer(l).weight() == b.layer(l).weight());

  const nlohmann::json j = to_json(ra);
  CHECK(to_json(report_from_json(j)).dump() == j.dump());
  CHECK(j.at("rounds").at(0).at("stages").contains("row"));
  CHECK(j.at("rounds").at(0).at("stages").at("column").contains("loss_curve"));

  TrainConfig other = cfg;
  other.seed = 100;
  TinyModel c = f.model;
  CHECK(to_json(taso_finetune(c, f.train, f.eval, other)).at("seed") == 100);
}

TEST_CASE("invalid configs are contract errors") {
  Fixture f = regression_fixture(57);
  TinyModel model = f.model;
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.base_lr = 0.0; }, [](TrainConfig& c) { c.k = 0.0; },
           [](TrainConfig& c) { c.p_fraction = 1.5; }, [](TrainConfig& c) { c.rounds = 0; },
           [](TrainConfig& c) { c.rank = 0; }}) {
    TrainConfig cfg = small_config();
    mutate(cfg);
    CHECK_THROWS_AS(taso_finetune(model, f.train, f.eval, cfg), ContractError);
  }
}
