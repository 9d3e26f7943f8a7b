#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "taso/harness/config.hpp"
#include "taso/harness/csv.hpp"
#include "taso/harness/experiments.hpp"
#include "taso/lora/pipeline.hpp"
#include "taso/tensor/errors.hpp"

using namespace taso;
using taso::test::cosine;
using taso::test::random_matrix;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("taso_harness_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

PlantedTaskSpec small_spec() {
  PlantedTaskSpec spec;
  spec.widths = {12, 10, 4};
  spec.support_fraction = 0.2;
  spec.train_count = 128;
  spec.eval_count = 64;
  return spec;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.base_lr = 0.01;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.p_fraction = 0.2;
  return cfg;
}

// Indices of the `n` largest values; ties to the smaller index.
std::vector<std::size_t> top_indices(const std::vector<double>& v, std::size_t n) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

// ---- CSV --------------------------------------------------------------------

TEST_CASE("CSV: last column is the label") {
  const auto dir = scratch_dir("csv");
  write_text(dir / "d.csv", "1,2,0\n3,4,1\n5, 6 ,1\n");
  const Dataset d = load_csv_dataset(dir / "d.csv");
  CHECK(d.features == Matrix{{1, 2}, {3, 4}, {5, 6}});
  CHECK(d.targets == Matrix{{0}, {1}, {1}});

  write_text(dir / "h.csv", "a,b,y\n1,2,0\n");
  CHECK(load_csv_dataset(dir / "h.csv", CsvSchema{std::nullopt, true}).size() == 1);
  CHECK_THROWS_AS(load_csv_dataset(dir / "h.csv"), SchemaError);
  CHECK_THROWS_AS(load_csv_dataset(dir / "d.csv", CsvSchema{3, false}), SchemaError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("CSV: failures carry the offending line") {
  const auto dir = scratch_dir("csv_bad");
  write_text(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_csv_dataset(dir / "empty.csv"), SchemaError);

  write_text(dir / "bad.csv", "1,2,0\n1,x,1\n");
  try {
    load_csv_dataset(dir / "bad.csv");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("bad.csv:2:") != std::string::npos);
  }

  write_text(dir / "ragged.csv", "1,2,0\n1,1\n");
  try {
    load_csv_dataset(dir / "ragged.csv");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("ragged.csv:2:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv_dataset(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("CSV: numbers round trip exactly") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-2.0) == "-2");
  Rng rng(81);
  const auto dir = scratch_dir("csv_rt");
  Dataset d{random_matrix(30, 4, rng, 1e3), random_matrix(30, 1, rng, 1e-7)};
  d.features(0, 0) = 1.0 / 3.0;
  d.features(1, 1) = 5e-324;
  write_csv_dataset(dir / "rt.csv", d, true);
  const Dataset back = load_csv_dataset(dir / "rt.csv", CsvSchema{4, true});
  CHECK(back.features == d.features);
  CHECK(back.targets == d.targets);
  std::filesystem::remove_all(dir);
}

TEST_CASE("heatmap export is row-major and round trips") {
  const auto dir = scratch_dir("heatmap");
  export_heatmap(Matrix::identity(2), dir / "i.csv");
  CHECK(read_text(dir / "i.csv") == "1,0\n0,1\n");
  Rng rng(82);
  const Matrix m = random_matrix(5, 7, rng);
  export_heatmap(m, dir / "m.csv");
  CHECK(read_csv_matrix(dir / "m.csv") == m);
  std::filesystem::remove_all(dir);
}

// ---- planted tasks ----------------------------------------------------------

TEST_CASE("planted delta lives exactly on the drawn support") {
  const PlantedTaskSpec spec = small_spec();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PlantedTask t = generate_planted_task(spec, seed);
    const std::size_t p = 10, q = 12;
    CHECK(t.support.size() == fraction_count(spec.support_fraction, p + q));
    CHECK(t.base.adapter_targets() == std::vector<std::size_t>{0});
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j)
        CHECK((t.delta_star(i, j) != 0.0) == (t.support.contains_row(i) || t.support.contains_col(j)));
    CHECK(t.teacher.layer(0).weight() == t.base.layer(0).weight() + t.delta_star);
    CHECK(t.teacher.layer(1).weight() == t.base.layer(1).weight());
    // Train and eval inputs are independent draws.
    for (std::size_t a = 0; a < t.eval.size(); ++a)
      for (std::size_t b = 0; b < t.train.size(); ++b)
        CHECK_FALSE(t.eval.features(a, 0) == t.train.features(b, 0));
    // Noise-free labels: the teacher agrees with itself everywhere.
    CHECK(evaluate(t.teacher, t.eval.features, t.eval.targets) == 1.0);
  }
  const PlantedTask a = generate_planted_task(spec, 3), b = generate_planted_task(spec, 3);
  CHECK(a.delta_star == b.delta_star);
  CHECK(a.train.features == b.train.features);
}

TEST_CASE("planted magnitude and explicit support") {
  PlantedTaskSpec spec = small_spec();
  spec.rows = {2, 5};
  spec.delta_scale = 0.3;
  const PlantedTask t = generate_planted_task(spec, 4);
  CHECK(t.support.rows == std::vector<std::size_t>{2, 5});
  CHECK(t.support.cols.empty());
  CHECK(frobenius_norm(t.delta_star) ==
        doctest::Approx(0.3 * frobenius_norm(t.base.layer(0).weight())).epsilon(1e-12));
  spec.rows = {10};
  CHECK_THROWS_AS(generate_planted_task(spec, 4), ContractError);
  spec.rows = {1, 1};
  CHECK_THROWS_AS(generate_planted_task(spec, 4), ContractError);
}

TEST_CASE("zero planted delta: TASO keeps the base exactly") {
  PlantedTaskSpec spec = small_spec();
  spec.delta_scale = 0.0;
  const PlantedTask t = generate_planted_task(spec, 5);
  CHECK(t.delta_star == Matrix(10, 12));
  TinyModel model = t.base;
  const RunReport r = taso_finetune(model, t.train, t.eval, small_config());
  CHECK(r.base_eval == 1.0);
  CHECK(r.final_eval == r.base_eval);
  CHECK(model.layer(0).weight() == t.base.layer(0).weight());
}

TEST_CASE("planted pairs share the base and have disjoint supports") {
  const PlantedPair pair = generate_planted_pair(small_spec(), 6);
  CHECK(pair.first.base.layer(0).weight() == pair.second.base.layer(0).weight());
  for (std::size_t i : pair.first.support.rows) CHECK_FALSE(pair.second.support.contains_row(i));
  for (std::size_t j : pair.first.support.cols) CHECK_FALSE(pair.second.support.contains_col(j));
  CHECK(pair.first.support.size() == pair.second.support.size());
}

TEST_CASE("row importance recovers planted rows {2, 5}") {
  PlantedTaskSpec spec;
  spec.widths = {16, 16};
  spec.rows = {2, 5};
  spec.train_count = 256;
  spec.eval_count = 32;
  const auto dir = scratch_dir("rows25");
  int hits = 0, hottest_hits = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const PlantedTask t = generate_planted_task(spec, static_cast<std::uint64_t>(s));
    const std::vector<Dataset> batches = make_batches(t.train, 64);
    const RegionSelection sel =
        select_region(t.base, batches, 0, 0.05, 0.1, ImportanceMetric::kSensitivity);
    hits += top_indices(sel.density.row, 2) == std::vector<std::size_t>{2, 5};

    export_heatmap(sel.importance.scores, dir / "heat.csv");
    const Matrix heat = read_csv_matrix(dir / "heat.csv");
    std::vector<double> row_mass(heat.rows(), 0.0);
    for (std::size_t i = 0; i < heat.rows(); ++i)
      for (std::size_t j = 0; j < heat.cols(); ++j) row_mass[i] += heat(i, j);
    hottest_hits += top_indices(row_mass, 2) == std::vector<std::size_t>{2, 5};
  }
  CHECK(hits >= 18);
  CHECK(hottest_hits >= 18);
  std::filesystem::remove_all(dir);
}

TEST_CASE("oracle regions recover a linear teacher's update direction") {
  PlantedTaskSpec spec;
  spec.widths = {12, 10};
  spec.loss = LossKind::kMeanSquared;
  spec.rows = {1, 4, 7};
  spec.cols = {0, 9};
  spec.train_count = 256;
  spec.eval_count = 64;
  const PlantedTask t = generate_planted_task(spec, 7);
  TrainConfig cfg;
  cfg.base_lr = 0.01;
  cfg.epochs = 150;
  cfg.rounds = 2;
  TasoOptions opts;
  opts.region_source = RegionSource::kOracle;
  opts.oracle_regions[0] = t.support;
  TinyModel model = t.base;
  const RunReport r = taso_finetune(model, t.train, t.eval, cfg, opts);
  const Matrix learned = model.layer(0).weight() - t.base.layer(0).weight();
  CHECK(cosine(learned, t.delta_star) >= 0.9);
  CHECK(r.final_eval < r.base_eval);
}

// ---- config -----------------------------------------------------------------

TEST_CASE("config rejects unknown keys and bad values") {
  using nlohmann::json;
  CHECK_NOTHROW(parse_config(json::object()));
  CHECK_THROWS_AS(parse_config(json{{"epoch", 3}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"epochs", "three"}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"epochs", -1}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"k", 0.0}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"optimizer", "rmsprop"}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"train_csv", "a.csv"}}), ContractError);
  CHECK_THROWS_AS(parse_config(json{{"dense_rank", 0}}), ContractError);
  CHECK_THROWS_AS(parse_config(json::array()), ContractError);
}

TEST_CASE("config round trips and resolves paths next to the file") {
  using nlohmann::json;
  const json j{{"base_lr", 0.005}, {"epochs", 7},      {"optimizer", "sgd"},
               {"widths", {8, 6}}, {"support_rows", {1, 2}}, {"seeds", {3, 4}},
               {"header", true},   {"p_list", {0.5}},  {"metric", "gradient"}};
  const ExperimentConfig c = parse_config(j);
  CHECK(c.train.base_lr == 0.005);
  CHECK(c.train.epochs == 7);
  CHECK(c.train.optimizer == OptimizerKind::kSgd);
  CHECK(c.train.metric == ImportanceMetric::kGradient);
  CHECK(c.task.rows == std::vector<std::size_t>{1, 2});
  CHECK(c.effective_seeds() == std::vector<std::uint64_t>{3, 4});
  CHECK(c.csv_header);
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));

  ExperimentConfig d;
  d.train.seed = 9;
  CHECK(d.effective_seeds() == std::vector<std::uint64_t>{9});
  CHECK(d.effective_task_seed() == 9);

  const auto dir = scratch_dir("config");
  write_text(dir / "c.json", R"({"train_csv": "a.csv", "eval_csv": "/abs/b.csv"})");
  const ExperimentConfig e = load_config(dir / "c.json");
  CHECK(*e.train_csv == dir / "a.csv");
  CHECK(*e.eval_csv == std::filesystem::path("/abs/b.csv"));
  write_text(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), IoError);
  CHECK_THROWS_AS(load_config(dir / "none.json"), IoError);
  std::filesystem::remove_all(dir);

  CHECK(parse_float_list("0.02,0.5") == std::vector<double>{0.02, 0.5});
  CHECK_THROWS_AS(parse_float_list("0.1,,2"), ContractError);
  CHECK_THROWS_AS(parse_float_list("abc"), ContractError);
}

TEST_CASE("CSV task data trains against a built base") {
  const auto dir = scratch_dir("csv_task");
  const PlantedTask t = generate_planted_task(small_spec(), 8);
  Dataset labels = t.train;
  // Argmax labels so a cross-entropy head can read them.
  labels.targets = Matrix(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < t.train.targets.cols(); ++c)
      if (t.train.targets(i, c) > t.train.targets(i, best)) best = c;
    labels.targets(i, 0) = static_cast<double>(best);
  }
  write_csv_dataset(dir / "train.csv", labels);
  write_csv_dataset(dir / "eval.csv", labels);
  write_text(dir / "c.json", R"({"train_csv": "train.csv", "eval_csv": "eval.csv",
                                 "widths": [12, 10, 4], "loss": "cross_entropy",
                                 "targets": [1]})");
  const TaskData data = load_task(load_config(dir / "c.json"));
  CHECK_FALSE(data.planted.has_value());
  CHECK(data.train.size() == labels.size());
  CHECK(data.base.adapter_targets() == std::vector<std::size_t>{1});
  CHECK(data.base.loss_kind() == LossKind::kCrossEntropy);
  std::filesystem::remove_all(dir);
}

// ---- experiments ------------------------------------------------------------

TEST_CASE("p sweep: one point per p, full region at p = 1") {
  const PlantedTask t = generate_planted_task(small_spec(), 9);
  const TrainConfig cfg = small_config();
  const std::vector<SweepPoint> curve = sweep_p(t, cfg, {0.1, 0.5, 1.0});
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].p_fraction == 0.1);
  CHECK(curve[2].p_fraction == 1.0);
  CHECK(curve[2].rho_row == 0.0);
  CHECK(curve[2].rho_col == 0.0);
  CHECK(curve[0].trainable <= curve[1].trainable);
  CHECK(curve[1].trainable <= curve[2].trainable);

  TrainConfig full = cfg;
  full.p_fraction = 1.0;
  TinyModel model = t.base;
  const RunReport direct = taso_finetune(model, t.train, t.eval, full);
  CHECK(curve[2].eval_metric == direct.final_eval);
  CHECK(curve[2].trainable == direct.trainable);
  // Both stages update all 10 rows or all 12 columns at rank 1.
  CHECK(direct.trainable == (10 + 12) + (10 + 12));
  CHECK_THROWS_AS(sweep_p(t, cfg, {}), ContractError);
  CHECK_THROWS_AS(sweep_p(t, cfg, {1.5}), ContractError);
}

TEST_CASE("ablation bookkeeping: three arms per seed") {
  const std::vector<std::uint64_t> seeds{1, 2};
  const AblationResult res = run_ablation(small_spec(), small_config(), seeds);
  REQUIRE(res.table.size() == 3);
  for (const std::string& arm : ablation_arms()) CHECK(res.reports.at(arm).size() == 2);
  const AblationRow& taso_row = res.table[0];
  CHECK(taso_row.arm == "taso");
  CHECK(taso_row.delta_vs_taso == 0.0);
  CHECK(taso_row.below_taso == 0);
  for (const AblationRow& row : res.table) {
    const auto& reps = res.reports.at(row.arm);
    const double mean = 0.5 * (reps[0].final_eval + reps[1].final_eval);
    CHECK(row.mean_eval == doctest::Approx(mean).epsilon(1e-15));
    CHECK(row.delta_vs_taso == doctest::Approx(mean - taso_row.mean_eval).epsilon(1e-15));
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(res.reports.at("taso")[i].seed == seeds[i]);
    // Without scaling every layer trains at the base rate.
    for (const StageReport& s : res.reports.at("taso_no_lr")[i].rounds[0].stages)
      for (const LayerStageReport& l : s.layers)
        if (!l.skipped) CHECK(l.lr == small_config().base_lr);
  }
  const auto dir = scratch_dir("ablation");
  write_ablation_csv(dir / "a.csv", res, true);
  const std::string text = read_text(dir / "a.csv");
  CHECK(text.rfind("arm,mean_eval,delta_vs_taso,below_taso\ntaso,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("composition with an empty second module is the first module alone") {
  const PlantedTask t = generate_planted_task(small_spec(), 10);
  TinyModel tuned = t.base;
  taso_finetune(tuned, t.train, t.eval, small_config());
  const DeltaSet first = extract_delta(t.base, tuned);
  REQUIRE(first.size() == 1);
  CHECK(first.at(0) == tuned.layer(0).weight() - t.base.layer(0).weight());

  const CompositionScore s = compose_tasks(t.base, first, {}, t.eval, t.eval);
  const double alone = evaluate(tuned, t.eval.features, t.eval.targets);
  CHECK(s.first == alone);
  CHECK(s.second == alone);
  CHECK(s.mean == alone);
  const DeltaSet zeros{{0, Matrix(10, 12)}};
  CHECK(compose_tasks(t.base, first, zeros, t.eval, t.eval).first == alone);
  const CompositionScore none = compose_tasks(t.base, {}, {}, t.eval, t.eval);
  CHECK(none.first == evaluate(t.base, t.eval.features, t.eval.targets));
  CHECK_THROWS_AS(compose_tasks(t.base, DeltaSet{{0, Matrix(3, 3)}}, {}, t.eval, t.eval),
                  ShapeError);
}

TEST_CASE("composition orders reuse the same trained modules") {
  PlantedTaskSpec spec = small_spec();
  spec.support_fraction = 0.1;
  const CompositionResult res = run_composition(spec, small_config(), 2, 11);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].base_task == "A");
  CHECK(res.rows[0].second == "dense");
  CHECK(res.rows[3].base_task == "B");
  CHECK(res.rows[3].second == "pruned");
  // (A, dense) and (B, dense) compose the same two modules on swapped splits.
  const double tol = 1.0 / static_cast<double>(spec.eval_count);
  CHECK(std::abs(res.rows[0].score.first - res.rows[2].score.second) <= tol);
  CHECK(std::abs(res.rows[0].score.second - res.rows[2].score.first) <= tol);
  for (const CompositionRow& r : res.rows)
    CHECK(r.score.mean == doctest::Approx(0.5 * (r.score.first + r.score.second)));

  const auto dir = scratch_dir("compose");
  write_composition_csv(dir / "c.csv", {res}, true);
  const std::string text = read_text(dir / "c.csv");
  CHECK(text.rfind("seed,base_task,second,first_metric,second_metric,mean\n11,A,dense,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  std::filesystem::remove_all(dir);
}
