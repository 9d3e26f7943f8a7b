#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "taso/lora/adapter.hpp"
#include "taso/models/checkpoint.hpp"
#include "taso/models/dataset.hpp"
#include "taso/models/model.hpp"
#include "taso/tensor/errors.hpp"

using namespace taso;
using taso::test::naive_matmul;
using taso::test::random_matrix;

namespace {

TinyModel single_layer(Matrix w, LossKind loss = LossKind::kMeanSquared) {
  const std::size_t q = w.cols();
  std::vector<Block> blocks;
  blocks.emplace_back(DenseBlock{FrozenLinear("dense0", std::move(w)), Activation::kIdentity});
  return TinyModel(q, std::move(blocks), loss);
}

SparseLoraModule random_adapter(std::size_t p, std::size_t q, std::size_t r, Rng& rng) {
  SparseLoraModule m = init_dense_adapter(p, q, r, rng());
  m.left = random_matrix(p, r, rng);
  return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("taso_models_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("identity base plus identity delta doubles the input row") {
  TinyModel model = single_layer(Matrix::identity(2));
  SparseLoraModule adapter = init_dense_adapter(2, 2, 2, 0);
  adapter.left = Matrix::identity(2);
  adapter.right = Matrix::identity(2);
  model.layer(0).attach(adapter);
  CHECK(forward(model, Matrix{{1.0, 2.0}}) == Matrix{{2.0, 4.0}});
}

TEST_CASE("zero left factor leaves the base output unchanged") {
  Rng rng(21);
  TinyModel model = build_tiny_classifier({5, 7, 3}, 4);
  const Matrix x = random_matrix(6, 5, rng);
  const Matrix before = forward(model, x);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const FrozenLinear& lin = model.layer(l);
    model.layer(l).attach(init_dense_adapter(lin.out_features(), lin.in_features(), 3, rng()));
  }
  CHECK(forward(model, x) == before);
}

TEST_CASE("forward equals x W0^T + x dW^T + b with dW materialized") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 1 + rng() % 6, q = 1 + rng() % 6;
    const Matrix w0 = random_matrix(p, q, rng);
    const Matrix b = random_matrix(1, p, rng);
    std::vector<Block> blocks;
    blocks.emplace_back(DenseBlock{FrozenLinear("l", w0, b), Activation::kIdentity});
    TinyModel model(q, std::move(blocks), LossKind::kMeanSquared);
    const SparseLoraModule adapter = random_adapter(p, q, 2, rng);
    model.layer(0).attach(adapter);

    const Matrix x = random_matrix(4, q, rng);
    const Matrix dw = naive_matmul(adapter.left, adapter.right);
    Matrix expected = naive_matmul(x, (w0 + dw).transposed());
    for (std::size_t i = 0; i < expected.rows(); ++i)
      for (std::size_t j = 0; j < p; ++j) expected(i, j) += b(0, j);
    CHECK(relative_error(forward(model, x), expected) <= 1e-12);
  }
}

TEST_CASE("forward rejects inputs of the wrong width") {
  TinyModel model = build_tiny_classifier({3, 2}, 1);
  CHECK_THROWS_AS(forward(model, Matrix(2, 4)), ShapeError);
}

TEST_CASE("merging preserves the forward map") {
  Rng rng(23);
  TinyModel model = build_tiny_classifier({6, 8, 4}, 9, Activation::kGelu);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const FrozenLinear& lin = model.layer(l);
    model.layer(l).attach(random_adapter(lin.out_features(), lin.in_features(), 2, rng));
  }
  TinyModel merged = model;
  for (std::size_t l = 0; l < merged.layer_count(); ++l) merged.layer(l).merge_delta();
  for (std::size_t l = 0; l < merged.layer_count(); ++l) CHECK_FALSE(merged.layer(l).has_adapter());
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(3, 6, rng);
    CHECK(relative_error(forward(merged, x), forward(model, x)) <= 1e-10);
  }
}

TEST_CASE("merge_delta edge cases") {
  Rng rng(24);
  const Matrix w0 = random_matrix(4, 3, rng);
  FrozenLinear lin("l", w0);
  CHECK_THROWS_AS(lin.merge_delta(), ContractError);

  lin.attach(init_dense_adapter(4, 3, 1, 5));
  lin.merge_delta();
  CHECK(lin.weight() == w0);

  // Row-stage adapter touches only rows in R_core.
  CoreRegion region;
  region.rows = {1, 3};
  SparseLoraModule row = init_adapter(4, 3, 1, Stage::kRow, region, 6);
  row.left = random_matrix(4, 1, rng);
  FrozenLinear merged = merge_delta([&] {
    FrozenLinear l("l", w0);
    l.attach(row);
    return l;
  }());
  const Matrix diff = merged.weight() - w0;
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(diff(0, j) == 0.0);
    CHECK(diff(2, j) == 0.0);
    CHECK(diff(1, j) != 0.0);
  }
  CHECK_THROWS_AS(lin.apply_delta(Matrix(3, 4)), ShapeError);
}

TEST_CASE("build_tiny_classifier bookkeeping") {
  const TinyModel a = build_tiny_classifier({8, 16, 4}, 77);
  const TinyModel b = build_tiny_classifier({8, 16, 4}, 77);
  REQUIRE(a.layer_count() == 2);
  CHECK(a.layer(0).weight().shape() == "16x8");
  CHECK(a.layer(1).weight().shape() == "4x16");
  CHECK(a.parameter_count() == 16 * 8 + 16 + 4 * 16 + 4);
  for (std::size_t l = 0; l < 2; ++l) CHECK(a.layer(l).weight() == b.layer(l).weight());
  CHECK(a.adapter_targets() == std::vector<std::size_t>{0, 1});
  CHECK(build_tiny_classifier({8, 16, 4}, 78).layer(0).weight() != a.layer(0).weight());
  CHECK_THROWS_AS(build_tiny_classifier({}, 0), ContractError);
  CHECK_THROWS_AS(build_tiny_classifier({4}, 0), ContractError);
}

TEST_CASE("adapter targets are validated") {
  TinyModel m = build_tiny_classifier({3, 3, 2}, 1);
  m.set_adapter_targets({1});
  CHECK(m.adapter_targets() == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(m.set_adapter_targets({2}), ContractError);
}

TEST_CASE("attention model exposes q, k, v and a head") {
  const TinyModel m = build_attention_classifier(3, 4, 2, 5);
  REQUIRE(m.layer_count() == 4);
  CHECK(m.layer(0).name() == "attn0.q");
  CHECK(m.layer(3).name() == "dense1");
  CHECK(m.input_width() == 12);
  Rng rng(25);
  const Matrix out = forward(m, random_matrix(5, 12, rng));
  CHECK(out.shape() == "5x2");
}

TEST_CASE("evaluate per loss kind") {
  const TinyModel ce = single_layer(Matrix::identity(2), LossKind::kCrossEntropy);
  CHECK(evaluate(ce, Matrix{{1, 0}, {0, 1}, {2, 1}}, Matrix{{0}, {1}, {1}}) ==
        doctest::Approx(2.0 / 3.0));
  const TinyModel mse = single_layer(Matrix::identity(2), LossKind::kMeanSquared);
  CHECK(evaluate(mse, Matrix{{1, 0}}, Matrix{{0, 0}}) == doctest::Approx(0.5));
  const TinyModel lm = single_layer(Matrix::identity(2), LossKind::kLogitMatch);
  CHECK(evaluate(lm, Matrix{{1, 0}, {0, 1}}, Matrix{{5, 1}, {3, 4}}) == 1.0);
  CHECK(evaluate(lm, Matrix{{1, 0}, {0, 1}}, Matrix{{0, 1}, {3, 4}}) == 0.5);
  CHECK(reports_accuracy(LossKind::kLogitMatch));
  CHECK_FALSE(reports_accuracy(LossKind::kMeanSquared));
}

TEST_CASE("enum names round trip") {
  for (LossKind k : {LossKind::kCrossEntropy, LossKind::kMeanSquared, LossKind::kLogitMatch})
    CHECK(parse_loss(to_string(k)) == k);
  for (Activation a : {Activation::kIdentity, Activation::kRelu, Activation::kGelu})
    CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS_AS(parse_loss("hinge"), ContractError);
}

TEST_CASE("batches cover the dataset in order") {
  Dataset d{Matrix(5, 2), Matrix(5, 1)};
  for (std::size_t i = 0; i < 5; ++i) d.features(i, 0) = static_cast<double>(i);
  const auto batches = make_batches(d, 2);
  REQUIRE(batches.size() == 3);
  CHECK(batches[2].size() == 1);
  CHECK(batches[2].features(0, 0) == 4.0);
  CHECK(make_batches(d, 0).size() == 1);
  const std::vector<std::size_t> rows{3, 1};
  CHECK(d.subset(rows).features(0, 0) == 3.0);
}

TEST_CASE("checkpoints round trip weights, adapters and targets bitwise") {
  Rng rng(26);
  TinyModel model = build_attention_classifier(2, 3, 2, 8);
  model.set_adapter_targets({0, 3});
  CoreRegion region;
  region.cols = {0, 2};
  SparseLoraModule adapter = init_adapter(3, 3, 1, Stage::kColumn, region, 3);
  adapter.left = random_matrix(3, 1, rng);
  model.layer(0).attach(adapter);

  const auto dir = scratch_dir("roundtrip");
  save_checkpoint(dir, model);
  const TinyModel back = load_checkpoint(dir);
  REQUIRE(back.layer_count() == model.layer_count());
  CHECK(back.adapter_targets() == model.adapter_targets());
  CHECK(back.loss_kind() == model.loss_kind());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    CHECK(back.layer(l).weight() == model.layer(l).weight());
    CHECK(back.layer(l).has_adapter() == model.layer(l).has_adapter());
  }
  REQUIRE(back.layer(0).has_adapter());
  CHECK(back.layer(0).adapter().left == adapter.left);
  CHECK(back.layer(0).adapter().masked_right() == adapter.masked_right());
  const Matrix x = random_matrix(4, 6, rng);
  CHECK(forward(back, x) == forward(model, x));
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint failures map to I/O errors") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/taso/checkpoint"), IoError);
  const auto dir = scratch_dir("corrupt");
  save_checkpoint(dir, build_tiny_classifier({2, 2}, 1));
  {
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    out << "not-a-model 7\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir), SchemaError);
  std::filesystem::remove_all(dir);
}
