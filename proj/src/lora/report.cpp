#include "taso/lora/report.hpp"

#include <fstream>

namespace taso {

using nlohmann::json;

json to_json(const TrainConfig& c) {
  return json{{"base_lr", c.base_lr},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"optimizer", std::string(to_string(c.optimizer))},
              {"rank", c.rank},
              {"k", c.k},
              {"p_fraction", c.p_fraction},
              {"rounds", c.rounds},
              {"lr_scaling", c.lr_scaling},
              {"seed", c.seed},
              {"metric", std::string(to_string(c.metric))},
              {"aggregation", std::string(to_string(c.aggregation))},
              {"recompute_between_stages", c.recompute_between_stages},
              {"freeze_regions", c.freeze_regions}};
}

namespace {

json stage_json(const StageReport& s) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    layers.push_back(json{{"layer", l.layer},
                          {"name", l.name},
                          {"rho", l.rho},
                          {"lr", l.lr},
                          {"trainable", l.trainable},
                          {"support", l.support},
                          {"skipped", l.skipped}});
  }
  json j{{"loss_curve", s.loss_curve}, {"eval_metric", s.eval_metric}, {"rho", s.rho},
         {"trainable", s.trainable},   {"epochs", s.epochs},           {"layers", layers}};
  if (s.sparsity) j["sparsity"] = *s.sparsity;
  return j;
}

StageReport stage_from_json(const std::string& name, const json& j) {
  StageReport s;
  s.stage = name;
  s.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  s.eval_metric = j.at("eval_metric").get<double>();
  s.rho = j.at("rho").get<double>();
  s.trainable = j.at("trainable").get<std::size_t>();
  s.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("sparsity")) s.sparsity = j.at("sparsity").get<double>();
  for (const auto& l : j.at("layers")) {
    s.layers.push_back(LayerStageReport{l.at("layer").get<std::size_t>(),
                                        l.at("name").get<std::string>(), l.at("rho").get<double>(),
                                        l.at("lr").get<double>(), l.at("trainable").get<std::size_t>(),
                                        l.at("support").get<std::vector<std::size_t>>(),
                                        l.at("skipped").get<bool>()});
  }
  return s;
}

}  // namespace

json to_json(const RunReport& r) {
  json rounds = json::array();
  for (const auto& round : r.rounds) {
    json regions = json::array();
    for (const auto& reg : round.regions)
      regions.push_back(json{{"layer", reg.layer}, {"rows", reg.rows}, {"cols", reg.cols}});
    json stages = json::object();
    json order = json::array();
    for (const auto& s : round.stages) {
      stages[s.stage] = stage_json(s);
      order.push_back(s.stage);
    }
    rounds.push_back(json{{"round", round.round}, {"regions", regions}, {"stages", stages},
                          {"stage_order", order}});
  }
  return json{{"arm", r.arm},
              {"metric", r.metric},
              {"seed", r.seed},
              {"base_eval", r.base_eval},
              {"final_eval", r.final_eval},
              {"trainable", r.trainable},
              {"total_epochs", r.total_epochs},
              {"sparsity", r.sparsity},
              {"wall_clock_seconds", r.wall_clock_seconds},
              {"rounds", rounds},
              {"config", r.config}};
}

RunReport report_from_json(const json& j) {
  RunReport r;
  r.arm = j.at("arm").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.base_eval = j.at("base_eval").get<double>();
  r.final_eval = j.at("final_eval").get<double>();
  r.trainable = j.at("trainable").get<std::size_t>();
  r.total_epochs = j.at("total_epochs").get<std::size_t>();
  r.sparsity = j.at("sparsity").get<double>();
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  for (const auto& jr : j.at("rounds")) {
    RoundReport round;
    round.round = jr.at("round").get<std::size_t>();
    for (const auto& reg : jr.at("regions"))
      round.regions.push_back(RegionReport{reg.at("layer").get<std::size_t>(),
                                           reg.at("rows").get<std::vector<std::size_t>>(),
                                           reg.at("cols").get<std::vector<std::size_t>>()});
    for (const auto& name : jr.at("stage_order")) {
      const auto n = name.get<std::string>();
      round.stages.push_back(stage_from_json(n, jr.at("stages").at(n)));
    }
    r.rounds.push_back(std::move(round));
  }
  if (j.contains("config")) r.config = j.at("config");
  return r;
}

json without_wall_clock(json j) {
  if (j.is_object()) {
    j.erase("wall_clock_seconds");
    for (auto& [key, value] : j.items()) value = without_wall_clock(value);
  } else if (j.is_array()) {
    for (auto& value : j) value = without_wall_clock(value);
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace taso
