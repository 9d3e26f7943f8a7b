#include "taso/harness/experiments.hpp"

#include <fstream>

#include "taso/baselines/baselines.hpp"
#include "taso/harness/csv.hpp"

namespace taso {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

AblationResult run_ablation(const PlantedTaskSpec& task, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty(), "ablation: need at least one seed");
  AblationResult result;
  result.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    const PlantedTask t = generate_planted_task(task, seed);
    TrainConfig cfg = config;
    cfg.seed = seed;
    for (const std::string& arm : ablation_arms()) {
      const ArmSetup setup = taso_arm(arm, cfg);
      TinyModel model = t.base;
      result.reports[arm].push_back(
          taso_finetune(model, t.train, t.eval, setup.config, setup.options));
    }
  }
  const auto& reference = result.reports.at("taso");
  double reference_mean = 0.0;
  for (const RunReport& r : reference) reference_mean += r.final_eval;
  reference_mean /= static_cast<double>(reference.size());
  for (const std::string& arm : ablation_arms()) {
    AblationRow row;
    row.arm = arm;
    const auto& reports = result.reports.at(arm);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      row.mean_eval += reports[i].final_eval;
      row.below_taso += reports[i].final_eval < reference[i].final_eval ? 1 : 0;
    }
    row.mean_eval /= static_cast<double>(reports.size());
    row.delta_vs_taso = row.mean_eval - reference_mean;
    result.table.push_back(row);
  }
  return result;
}

std::vector<SweepPoint> sweep_p(const PlantedTask& task, const TrainConfig& config,
                                const std::vector<double>& p_list) {
  return sweep_p(task.base, task.train, task.eval, config, p_list);
}

std::vector<SweepPoint> sweep_p(const TinyModel& base, const Dataset& train, const Dataset& eval,
                                const TrainConfig& config, const std::vector<double>& p_list) {
  require(!p_list.empty(), "sweep_p: empty p list");
  for (double p : p_list) require(p > 0.0 && p <= 1.0, "sweep_p: every p must lie in (0, 1]");
  std::vector<SweepPoint> curve;
  for (double p : p_list) {
    TrainConfig cfg = config;
    cfg.p_fraction = p;
    TinyModel model = base;
    const RunReport r = taso_finetune(model, train, eval, cfg);
    SweepPoint point;
    point.p_fraction = p;
    point.eval_metric = r.final_eval;
    point.trainable = r.trainable;
    // Round-mean of the per-stage rho.
    for (const RoundReport& round : r.rounds) {
      for (const StageReport& s : round.stages) {
        if (s.stage == "row") point.rho_row += s.rho;
        if (s.stage == "column") point.rho_col += s.rho;
      }
    }
    point.rho_row /= static_cast<double>(r.rounds.size());
    point.rho_col /= static_cast<double>(r.rounds.size());
    curve.push_back(point);
  }
  return curve;
}

DeltaSet extract_delta(const TinyModel& before, const TinyModel& after) {
  require(before.layer_count() == after.layer_count(), "extract_delta: models differ in depth");
  DeltaSet deltas;
  for (std::size_t layer : before.adapter_targets()) {
    const Matrix& w0 = before.layer(layer).weight();
    const Matrix& w1 = after.layer(layer).weight();
    if (!w0.same_shape(w1)) throw ShapeError("extract_delta: layer shapes differ");
    deltas.emplace(layer, w1 - w0);
  }
  return deltas;
}

CompositionScore compose_tasks(const TinyModel& base, const DeltaSet& first,
                               const DeltaSet& second, const Dataset& eval_first,
                               const Dataset& eval_second) {
  TinyModel model = base;
  model.clear_adapters();
  for (const DeltaSet* set : {&first, &second}) {
    for (const auto& [layer, delta] : *set) {
      require(layer < model.layer_count(), "compose: delta for a missing layer");
      if (!delta.same_shape(model.layer(layer).weight()))
        throw ShapeError("compose: delta " + delta.shape() + " for layer " +
                         model.layer(layer).name() + " of shape " +
                         model.layer(layer).weight().shape());
      model.layer(layer).apply_delta(delta);
    }
  }
  CompositionScore score;
  score.first = evaluate(model, eval_first.features, eval_first.targets);
  score.second = evaluate(model, eval_second.features, eval_second.targets);
  score.mean = 0.5 * (score.first + score.second);
  return score;
}

CompositionResult run_composition(const PlantedTaskSpec& task, const TrainConfig& config,
                                  std::size_t dense_rank, std::uint64_t seed) {
  const PlantedPair pair = generate_planted_pair(task, seed);
  TrainConfig cfg = config;
  cfg.seed = seed;

  struct Modules {
    DeltaSet dense;
    DeltaSet pruned;
  };
  auto train_modules = [&](const PlantedTask& t) {
    Modules m;
    TinyModel dense = t.base;
    dense_lora_finetune(dense, t.train, t.eval, dense_rank, cfg);
    m.dense = extract_delta(t.base, dense);
    TinyModel pruned = t.base;
    taso_finetune(pruned, t.train, t.eval, cfg);
    m.pruned = extract_delta(t.base, pruned);
    return m;
  };
  const Modules a = train_modules(pair.first);
  const Modules b = train_modules(pair.second);
  const TinyModel& base = pair.first.base;

  CompositionResult result;
  result.seed = seed;
  result.rows.push_back(
      {"A", "dense", compose_tasks(base, a.dense, b.dense, pair.first.eval, pair.second.eval)});
  result.rows.push_back(
      {"A", "pruned", compose_tasks(base, a.dense, b.pruned, pair.first.eval, pair.second.eval)});
  result.rows.push_back(
      {"B", "dense", compose_tasks(base, b.dense, a.dense, pair.second.eval, pair.first.eval)});
  result.rows.push_back(
      {"B", "pruned", compose_tasks(base, b.dense, a.pruned, pair.second.eval, pair.first.eval)});
  return result;
}

json to_json(const AblationResult& result) {
  json reports = json::object();
  for (const auto& [arm, list] : result.reports) {
    json arr = json::array();
    for (const RunReport& r : list) arr.push_back(to_json(r));
    reports[arm] = arr;
  }
  json table = json::array();
  for (const AblationRow& row : result.table)
    table.push_back(json{{"arm", row.arm},
                         {"mean_eval", row.mean_eval},
                         {"delta_vs_taso", row.delta_vs_taso},
                         {"below_taso", row.below_taso}});
  return json{{"seeds", result.seeds}, {"table", table}, {"reports", reports}};
}

json to_json(const std::vector<SweepPoint>& curve) {
  json arr = json::array();
  for (const SweepPoint& p : curve)
    arr.push_back(json{{"p", p.p_fraction},
                       {"eval_metric", p.eval_metric},
                       {"trainable", p.trainable},
                       {"rho_row", p.rho_row},
                       {"rho_col", p.rho_col}});
  return arr;
}

json to_json(const CompositionResult& result) {
  json rows = json::array();
  for (const CompositionRow& r : result.rows)
    rows.push_back(json{{"base_task", r.base_task},
                        {"second", r.second},
                        {"first_metric", r.score.first},
                        {"second_metric", r.score.second},
                        {"mean", r.score.mean}});
  return json{{"seed", result.seed}, {"rows", rows}};
}

void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result,
                        bool header) {
  std::ofstream out = open_out(path);
  if (header) out << "arm,mean_eval,delta_vs_taso,below_taso\n";
  for (const AblationRow& row : result.table)
    out << row.arm << ',' << format_number(row.mean_eval) << ','
        << format_number(row.delta_vs_taso) << ',' << row.below_taso << '\n';
  finish(out, path);
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& curve,
                     bool header) {
  std::ofstream out = open_out(path);
  if (header) out << "p,accuracy,trainable,rho_row,rho_col\n";
  for (const SweepPoint& p : curve)
    out << format_number(p.p_fraction) << ',' << format_number(p.eval_metric) << ','
        << p.trainable << ',' << format_number(p.rho_row) << ',' << format_number(p.rho_col)
        << '\n';
  finish(out, path);
}

void write_composition_csv(const std::filesystem::path& path,
                           const std::vector<CompositionResult>& results, bool header) {
  std::ofstream out = open_out(path);
  if (header) out << "seed,base_task,second,first_metric,second_metric,mean\n";
  for (const CompositionResult& result : results)
    for (const CompositionRow& r : result.rows)
      out << result.seed << ',' << r.base_task << ',' << r.second << ','
          << format_number(r.score.first) << ',' << format_number(r.score.second) << ','
          << format_number(r.score.mean) << '\n';
  finish(out, path);
}

void write_curve_csv(const std::filesystem::path& path, const RunReport& report, bool header) {
  std::ofstream out = open_out(path);
  if (header) out << "round,stage,epoch,loss\n";
  for (const RoundReport& round : report.rounds)
    for (const StageReport& s : round.stages)
      for (std::size_t e = 0; e < s.loss_curve.size(); ++e)
        out << round.round << ',' << s.stage << ',' << e << ',' << format_number(s.loss_curve[e])
            << '\n';
  finish(out, path);
}

}  // namespace taso
