#include "taso/harness/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "taso/baselines/baselines.hpp"
#include "taso/harness/config.hpp"
#include "taso/harness/csv.hpp"
#include "taso/harness/experiments.hpp"
#include "taso/models/checkpoint.hpp"
#include "taso/tensor/tsr1.hpp"

namespace taso {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arm;
  std::optional<std::string> p_list;
  bool header = false;
  std::string report_path;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig config = load_config(o.config_path);
  if (o.seed) {
    // The task seed follows --seed unless the config pins it.
    config.train.seed = *o.seed;
    config.seeds = {*o.seed};
  }
  if (o.arm) config.arm = *o.arm;
  if (o.p_list) config.p_list = parse_float_list(*o.p_list);
  if (o.header) config.csv_header = true;
  return config;
}

fs::path prepare_out(const Options& o) {
  const fs::path out(o.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  return out;
}

void save_deltas(const fs::path& out, const TinyModel& before, const TinyModel& after) {
  for (const auto& [layer, delta] : extract_delta(before, after))
    tsr1::save(out / (before.layer(layer).name() + ".delta.tsr"), delta);
}

json with_command(json j, const std::string& command, const ExperimentConfig& config) {
  j["command"] = command;
  j["experiment"] = to_json(config);
  return j;
}

std::string summary(const std::string& command, const RunReport& r, const fs::path& out) {
  return command + ": arm=" + r.arm + " " + r.metric + "=" + format_number(r.final_eval) +
         " trainable=" + std::to_string(r.trainable) +
         " epochs=" + std::to_string(r.total_epochs) + " out=" + out.string();
}

void finish_run(const std::string& command, const ExperimentConfig& config, const TaskData& task,
                const TinyModel& model, const RunReport& report, const fs::path& out,
                std::ostream& os) {
  write_json(out / "report.json", with_command(to_json(report), command, config));
  write_curve_csv(out / "curve.csv", report, config.csv_header);
  save_checkpoint(out / "model", model);
  save_deltas(out, task.base, model);
  os << summary(command, report, out) << '\n';
}

int run_importance(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  const TaskData task = load_task(config);
  const fs::path out = prepare_out(o);
  const std::vector<Dataset> batches = make_batches(task.train, config.train.batch_size);
  json layers = json::array();
  bool first = true;
  for (std::size_t layer : task.base.adapter_targets()) {
    const std::string& name = task.base.layer(layer).name();
    const RegionSelection sel =
        select_region(task.base, batches, layer, config.train.k, config.train.p_fraction,
                      config.train.metric, config.train.aggregation);
    tsr1::save(out / (name + ".scores.tsr"), sel.importance.scores);
    tsr1::save(out / (name + ".mask.tsr"), sel.mask.bits);
    tsr1::save(out / (name + ".row_density.tsr"),
               Matrix(1, sel.density.row.size(), sel.density.row));
    tsr1::save(out / (name + ".col_density.tsr"),
               Matrix(1, sel.density.col.size(), sel.density.col));
    write_region_file(out / (name + ".region.txt"), sel.region);
    if (first) {
      export_heatmap(sel.importance.scores, out / "heatmap.csv");
      write_region_file(out / "region.txt", sel.region);
      first = false;
    }
    layers.push_back(json{{"layer", layer},
                          {"name", name},
                          {"rows", sel.region.rows},
                          {"cols", sel.region.cols},
                          {"mask_ones", sel.mask.count_ones()},
                          {"sample_count", sel.importance.sample_count}});
  }
  json j{{"metric", std::string(to_string(config.train.metric))},
         {"k", config.train.k},
         {"p_fraction", config.train.p_fraction},
         {"layers", layers}};
  if (task.planted)
    j["planted_support"] = json{{"layer", task.planted->layer},
                                {"rows", task.planted->support.rows},
                                {"cols", task.planted->support.cols}};
  write_json(out / "report.json", with_command(j, "importance", config));
  os << "importance: metric=" << to_string(config.train.metric)
     << " layers=" << layers.size() << " out=" << out.string() << '\n';
  return kExitOk;
}

int run_train_taso(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  const TaskData task = load_task(config);
  const fs::path out = prepare_out(o);
  ArmSetup setup = taso_arm(config.arm, config.train);
  setup.options.on_adapter = [&](std::size_t round, std::size_t layer,
                                 const SparseLoraModule& adapter, const CoreRegion& region) {
    save_adapter(out / "adapters" /
                     ("round" + std::to_string(round) + "_" + std::string(to_string(adapter.stage)) +
                      "_" + task.base.layer(layer).name()),
                 adapter, region);
  };
  TinyModel model = task.base;
  const RunReport report = taso_finetune(model, task.train, task.eval, setup.config, setup.options);
  const RoundReport& round0 = report.rounds.front();
  for (const RegionReport& r : round0.regions) {
    CoreRegion region;
    region.rows = r.rows;
    region.cols = r.cols;
    region.p_fraction = setup.config.p_fraction;
    write_region_file(out / (task.base.layer(r.layer).name() + ".region.txt"), region);
    if (&r == &round0.regions.front()) write_region_file(out / "region.txt", region);
  }
  finish_run("train-taso", config, task, model, report, out, os);
  return kExitOk;
}

int run_train_lora(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  const TaskData task = load_task(config);
  const fs::path out = prepare_out(o);
  TinyModel model = task.base;
  const RunReport report =
      dense_lora_finetune(model, task.train, task.eval, config.dense_rank, config.train);
  finish_run("train-lora", config, task, model, report, out, os);
  return kExitOk;
}

int run_imp(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  const TaskData task = load_task(config);
  const fs::path out = prepare_out(o);
  TinyModel model = task.base;
  const RunReport report = imp_lora(model, task.train, task.eval, config.dense_rank,
                                    config.imp_target_sparsity, config.imp_iterations, config.train);
  finish_run("imp", config, task, model, report, out, os);
  return kExitOk;
}

void require_planted(const ExperimentConfig& config, const std::string& command) {
  require(!config.train_csv, command + " needs a planted task; remove train_csv/eval_csv");
}

int run_ablate(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  require_planted(config, "ablate");
  const fs::path out = prepare_out(o);
  const AblationResult result = run_ablation(config.task, config.train, config.effective_seeds());
  write_json(out / "report.json", with_command(to_json(result), "ablate", config));
  write_ablation_csv(out / "ablation.csv", result, config.csv_header);
  os << "ablate: seeds=" << result.seeds.size();
  for (const AblationRow& row : result.table)
    os << ' ' << row.arm << "=" << format_number(row.mean_eval);
  os << " out=" << out.string() << '\n';
  return kExitOk;
}

int run_sweep(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  const TaskData task = load_task(config);
  const fs::path out = prepare_out(o);
  const std::vector<SweepPoint> curve =
      sweep_p(task.base, task.train, task.eval, config.train, config.p_list);
  write_json(out / "report.json", with_command(json{{"points", to_json(curve)}}, "sweep-p", config));
  write_sweep_csv(out / "curve.csv", curve, config.csv_header);
  os << "sweep-p: points=" << curve.size();
  for (const SweepPoint& p : curve)
    os << ' ' << format_number(p.p_fraction) << ':' << format_number(p.eval_metric);
  os << " out=" << out.string() << '\n';
  return kExitOk;
}

int run_compose(const Options& o, std::ostream& os) {
  const ExperimentConfig config = resolve_config(o);
  require_planted(config, "compose");
  const fs::path out = prepare_out(o);
  std::vector<CompositionResult> results;
  json per_seed = json::array();
  double dense_mean = 0.0;
  double pruned_mean = 0.0;
  std::size_t pruned_wins = 0;
  for (std::uint64_t seed : config.effective_seeds()) {
    CompositionResult r = run_composition(config.task, config.train, config.dense_rank, seed);
    for (const std::string task : {"A", "B"}) {
      double dense = 0.0;
      double pruned = 0.0;
      for (const CompositionRow& row : r.rows) {
        if (row.base_task != task) continue;
        (row.second == "dense" ? dense : pruned) = row.score.mean;
      }
      dense_mean += dense;
      pruned_mean += pruned;
      pruned_wins += pruned >= dense ? 1 : 0;
    }
    per_seed.push_back(to_json(r));
    results.push_back(std::move(r));
  }
  const double pairs = 2.0 * static_cast<double>(results.size());
  dense_mean /= pairs;
  pruned_mean /= pairs;
  json j{{"results", per_seed},
         {"summary",
          {{"dense_mean", dense_mean}, {"pruned_mean", pruned_mean}, {"pruned_at_least_dense", pruned_wins},
           {"pairs", static_cast<std::size_t>(pairs)}}}};
  write_json(out / "report.json", with_command(j, "compose", config));
  write_composition_csv(out / "composition.csv", results, config.csv_header);
  os << "compose: seeds=" << results.size() << " dense_mean=" << format_number(dense_mean)
     << " pruned_mean=" << format_number(pruned_mean) << " out=" << out.string() << '\n';
  return kExitOk;
}

int run_report(const Options& o, std::ostream& os) {
  fs::path path(o.report_path);
  if (fs::is_directory(path)) path /= "report.json";
  const json j = read_json(path);
  const std::string command = j.value("command", std::string("train-taso"));
  if (j.contains("arm")) {
    RunReport r;
    try {
      r = report_from_json(j);
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    os << "arm=" << r.arm << ' ' << r.metric << '=' << format_number(r.final_eval)
       << " trainable=" << r.trainable << " epochs=" << r.total_epochs << '\n';
    return kExitOk;
  }
  os << "command=" << command;
  if (j.contains("table"))
    for (const auto& row : j.at("table"))
      os << ' ' << row.at("arm").get<std::string>() << '='
         << format_number(row.at("mean_eval").get<double>());
  if (j.contains("points"))
    for (const auto& p : j.at("points"))
      os << ' ' << format_number(p.at("p").get<double>()) << ':'
         << format_number(p.at("eval_metric").get<double>());
  if (j.contains("summary"))
    os << " dense_mean=" << format_number(j.at("summary").at("dense_mean").get<double>())
       << " pruned_mean=" << format_number(j.at("summary").at("pruned_mean").get<double>());
  if (j.contains("layers"))
    for (const auto& l : j.at("layers"))
      os << ' ' << l.at("name").get<std::string>() << ":rows=" << l.at("rows").size()
         << ",cols=" << l.at("cols").size();
  os << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured rank-1 LoRA fine-tuning on tiny frozen models", "taso"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Flat JSON config")->required();
    sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Seed; overrides config seed and seeds");
    sub->add_option("--arm", o.arm, "taso | taso_no_lr | taso_random_region | dare");
    sub->add_option("--p-list", o.p_list, "Comma-separated p fractions for sweep-p");
    sub->add_flag("--header", o.header, "Write CSV header rows");
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&, std::ostream&);
  };
  const Command commands[] = {
      {"importance", "Score parameters; export masks, densities and the core region", run_importance},
      {"train-taso", "Row stage then column stage structured rank-1 fine-tuning", run_train_taso},
      {"train-lora", "Dense LoRA baseline at dense_rank", run_train_lora},
      {"imp", "Iterative magnitude pruning of LoRA with rewinding", run_imp},
      {"ablate", "taso, taso_no_lr and taso_random_region over seeds", run_ablate},
      {"sweep-p", "Eval metric against p_fraction", run_sweep},
      {"compose", "Compose dense and pruned modules of two planted tasks", run_compose},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }
  CLI::App* report = app.add_subcommand("report", "Print the summary of a run directory");
  report->add_option("path", o.report_path, "Run directory or report.json")->required();

  std::vector<char*> argv;
  std::vector<std::string> storage(args.begin(), args.end());
  if (storage.empty()) storage.emplace_back("taso");
  for (std::string& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitContract;
  }

  try {
    if (report->parsed()) return run_report(o, out);
    for (const auto& [sub, command] : subs)
      if (sub->parsed()) return command->run(o, out);
    err << app.help();
    return kExitContract;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitContract;
  }
}

int cli_main(int argc, char** argv) {
  return cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace taso
