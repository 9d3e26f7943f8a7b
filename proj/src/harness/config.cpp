#include "taso/harness/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <string_view>

#include "taso/harness/csv.hpp"
#include "taso/lora/report.hpp"
#include "taso/models/checkpoint.hpp"
#include "taso/tensor/random.hpp"

namespace taso {

using nlohmann::json;

namespace {

std::size_t as_size(const json& v, const std::string& key) {
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
          "config: '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& key) {
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
          "config: '" + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  require(v.is_number(), "config: '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  require(v.is_boolean(), "config: '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  require(v.is_string(), "config: '" + key + "' must be a string");
  return v.get<std::string>();
}

template <class T, class F>
std::vector<T> as_list(const json& v, const std::string& key, F element) {
  require(v.is_array(), "config: '" + key + "' must be an array");
  std::vector<T> out;
  for (const json& e : v) out.push_back(element(e, key));
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::filesystem::path&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  using P = const std::filesystem::path&;
  static const std::map<std::string, Setter, std::less<>> table{
      {"base_lr", [](ExperimentConfig& c, const json& v, P) { c.train.base_lr = as_double(v, "base_lr"); }},
      {"epochs", [](ExperimentConfig& c, const json& v, P) { c.train.epochs = as_size(v, "epochs"); }},
      {"batch_size",
       [](ExperimentConfig& c, const json& v, P) { c.train.batch_size = as_size(v, "batch_size"); }},
      {"optimizer",
       [](ExperimentConfig& c, const json& v, P) {
         c.train.optimizer = parse_optimizer(as_string(v, "optimizer"));
       }},
      {"rank", [](ExperimentConfig& c, const json& v, P) { c.train.rank = as_size(v, "rank"); }},
      {"k", [](ExperimentConfig& c, const json& v, P) { c.train.k = as_double(v, "k"); }},
      {"p_fraction",
       [](ExperimentConfig& c, const json& v, P) { c.train.p_fraction = as_double(v, "p_fraction"); }},
      {"rounds", [](ExperimentConfig& c, const json& v, P) { c.train.rounds = as_size(v, "rounds"); }},
      {"lr_scaling",
       [](ExperimentConfig& c, const json& v, P) { c.train.lr_scaling = as_bool(v, "lr_scaling"); }},
      {"seed", [](ExperimentConfig& c, const json& v, P) { c.train.seed = as_u64(v, "seed"); }},
      {"metric",
       [](ExperimentConfig& c, const json& v, P) { c.train.metric = parse_metric(as_string(v, "metric")); }},
      {"aggregation",
       [](ExperimentConfig& c, const json& v, P) {
         c.train.aggregation = parse_aggregation(as_string(v, "aggregation"));
       }},
      {"recompute_between_stages",
       [](ExperimentConfig& c, const json& v, P) {
         c.train.recompute_between_stages = as_bool(v, "recompute_between_stages");
       }},
      {"freeze_regions",
       [](ExperimentConfig& c, const json& v, P) {
         c.train.freeze_regions = as_bool(v, "freeze_regions");
       }},

      {"widths",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.widths = as_list<std::size_t>(v, "widths", as_size);
       }},
      {"hidden_activation",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.hidden_activation = parse_activation(as_string(v, "hidden_activation"));
       }},
      {"loss",
       [](ExperimentConfig& c, const json& v, P) { c.task.loss = parse_loss(as_string(v, "loss")); }},
      {"layer", [](ExperimentConfig& c, const json& v, P) { c.task.layer = as_size(v, "layer"); }},
      {"support_rows",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.rows = as_list<std::size_t>(v, "support_rows", as_size);
       }},
      {"support_cols",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.cols = as_list<std::size_t>(v, "support_cols", as_size);
       }},
      {"support_fraction",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.support_fraction = as_double(v, "support_fraction");
       }},
      {"row_share",
       [](ExperimentConfig& c, const json& v, P) { c.task.row_share = as_double(v, "row_share"); }},
      {"support_power",
       [](ExperimentConfig& c, const json& v, P) {
         c.task.support_power = as_double(v, "support_power");
       }},
      {"delta_scale",
       [](ExperimentConfig& c, const json& v, P) { c.task.delta_scale = as_double(v, "delta_scale"); }},
      {"input_std",
       [](ExperimentConfig& c, const json& v, P) { c.task.input_std = as_double(v, "input_std"); }},
      {"train_count",
       [](ExperimentConfig& c, const json& v, P) { c.task.train_count = as_size(v, "train_count"); }},
      {"eval_count",
       [](ExperimentConfig& c, const json& v, P) { c.task.eval_count = as_size(v, "eval_count"); }},
      {"noise", [](ExperimentConfig& c, const json& v, P) { c.task.noise = as_double(v, "noise"); }},
      {"task_seed",
       [](ExperimentConfig& c, const json& v, P) { c.task_seed = as_u64(v, "task_seed"); }},

      {"arm", [](ExperimentConfig& c, const json& v, P) { c.arm = as_string(v, "arm"); }},
      {"dense_rank",
       [](ExperimentConfig& c, const json& v, P) { c.dense_rank = as_size(v, "dense_rank"); }},
      {"imp_target_sparsity",
       [](ExperimentConfig& c, const json& v, P) {
         c.imp_target_sparsity = as_double(v, "imp_target_sparsity");
       }},
      {"imp_iterations",
       [](ExperimentConfig& c, const json& v, P) { c.imp_iterations = as_size(v, "imp_iterations"); }},
      {"seeds",
       [](ExperimentConfig& c, const json& v, P) {
         c.seeds = as_list<std::uint64_t>(v, "seeds", as_u64);
       }},
      {"p_list",
       [](ExperimentConfig& c, const json& v, P) {
         c.p_list = as_list<double>(v, "p_list", as_double);
       }},
      {"header", [](ExperimentConfig& c, const json& v, P) { c.csv_header = as_bool(v, "header"); }},

      {"train_csv",
       [](ExperimentConfig& c, const json& v, P base) {
         c.train_csv = resolve(base, as_string(v, "train_csv"));
       }},
      {"eval_csv",
       [](ExperimentConfig& c, const json& v, P base) {
         c.eval_csv = resolve(base, as_string(v, "eval_csv"));
       }},
      {"model",
       [](ExperimentConfig& c, const json& v, P base) {
         c.model_dir = resolve(base, as_string(v, "model"));
       }},
      {"targets",
       [](ExperimentConfig& c, const json& v, P) {
         c.targets = as_list<std::size_t>(v, "targets", as_size);
       }},
  };
  return table;
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::effective_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{train.seed} : seeds;
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  require(j.is_object(), "config: top level must be a JSON object");
  ExperimentConfig config;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    require(it != table.end(), "config: unknown key '" + key + "'");
    it->second(config, value, base_dir);
  }
  config.train.validate();
  require(config.train_csv.has_value() == config.eval_csv.has_value(),
          "config: train_csv and eval_csv must be given together");
  require(config.dense_rank >= 1, "config: dense_rank must be at least 1");
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json(path), path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j = to_json(c.train);
  j["widths"] = c.task.widths;
  j["hidden_activation"] = std::string(to_string(c.task.hidden_activation));
  j["loss"] = std::string(to_string(c.task.loss));
  j["layer"] = c.task.layer;
  j["support_rows"] = c.task.rows;
  j["support_cols"] = c.task.cols;
  j["support_fraction"] = c.task.support_fraction;
  j["row_share"] = c.task.row_share;
  j["support_power"] = c.task.support_power;
  j["delta_scale"] = c.task.delta_scale;
  j["input_std"] = c.task.input_std;
  j["train_count"] = c.task.train_count;
  j["eval_count"] = c.task.eval_count;
  j["noise"] = c.task.noise;
  j["task_seed"] = c.effective_task_seed();
  j["arm"] = c.arm;
  j["dense_rank"] = c.dense_rank;
  j["imp_target_sparsity"] = c.imp_target_sparsity;
  j["imp_iterations"] = c.imp_iterations;
  j["seeds"] = c.effective_seeds();
  j["p_list"] = c.p_list;
  j["header"] = c.csv_header;
  if (c.train_csv) j["train_csv"] = c.train_csv->string();
  if (c.eval_csv) j["eval_csv"] = c.eval_csv->string();
  if (c.model_dir) j["model"] = c.model_dir->string();
  if (c.targets) j["targets"] = *c.targets;
  return j;
}

std::vector<double> parse_float_list(const std::string& text) {
  std::vector<double> out;
  std::string_view rest(text);
  while (true) {
    const std::size_t comma = rest.find(',');
    std::string_view field = rest.substr(0, comma);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    require(!field.empty() && ec == std::errc() && ptr == field.data() + field.size(),
            "cannot parse '" + std::string(field) + "' as a number");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

TaskData load_task(const ExperimentConfig& config) {
  if (!config.train_csv) {
    PlantedTask planted = generate_planted_task(config.task, config.effective_task_seed());
    TaskData data{planted.base, planted.train, planted.eval, std::nullopt};
    if (config.targets) data.base.set_adapter_targets(*config.targets);
    data.planted = std::move(planted);
    return data;
  }
  TinyModel base = config.model_dir
                       ? load_checkpoint(*config.model_dir)
                       : build_tiny_classifier(config.task.widths,
                                               derive_seed(config.effective_task_seed(), {1}),
                                               config.task.hidden_activation, config.task.loss);
  if (config.targets) base.set_adapter_targets(*config.targets);
  const CsvSchema schema{base.input_width(), config.csv_header};
  Dataset train = load_csv_dataset(*config.train_csv, schema);
  Dataset eval = load_csv_dataset(*config.eval_csv, schema);
  return TaskData{std::move(base), std::move(train), std::move(eval), std::nullopt};
}

}  // namespace taso
