#include "taso/models/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "taso/tensor/tsr1.hpp"

namespace taso {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::size_t>& v) {
  if (v.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> split_indices(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "-") return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoul(tok));
  return out;
}

void write_layer(std::ostream& manifest, const std::filesystem::path& dir,
                 const FrozenLinear& layer) {
  const std::string& n = layer.name();
  tsr1::save(dir / (n + ".weight.tsr"), layer.weight());
  if (layer.bias()) tsr1::save(dir / (n + ".bias.tsr"), *layer.bias());
  manifest << "layer name=" << n << " rows=" << layer.out_features()
           << " cols=" << layer.in_features() << " bias=" << (layer.bias() ? 1 : 0);
  if (!layer.has_adapter()) {
    manifest << " adapter=none\n";
    return;
  }
  const SparseLoraModule& a = layer.adapter();
  tsr1::save(dir / (n + ".left.tsr"), a.left);
  tsr1::save(dir / (n + ".right.tsr"), a.right);
  if (a.left_mask) tsr1::save(dir / (n + ".left_mask.tsr"), *a.left_mask);
  if (a.right_mask) tsr1::save(dir / (n + ".right_mask.tsr"), *a.right_mask);
  manifest << " adapter=" << to_string(a.stage) << " rank=" << a.rank()
           << " rho=" << format_double(a.rho) << " support=" << join(a.support)
           << " left_mask=" << (a.left_mask ? 1 : 0) << " right_mask=" << (a.right_mask ? 1 : 0)
           << "\n";
}

using Fields = std::map<std::string, std::string>;

Fields parse_fields(std::istringstream& line) {
  Fields f;
  std::string tok;
  while (line >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw SchemaError("manifest: malformed field '" + tok + "'");
    f[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return f;
}

const std::string& field(const Fields& f, const std::string& key) {
  auto it = f.find(key);
  if (it == f.end()) throw SchemaError("manifest: missing field '" + key + "'");
  return it->second;
}

FrozenLinear read_layer(const std::filesystem::path& dir, std::istream& manifest) {
  std::string line;
  if (!std::getline(manifest, line)) throw SchemaError("manifest: truncated layer list");
  std::istringstream ls(line);
  std::string kind;
  ls >> kind;
  if (kind != "layer") throw SchemaError("manifest: expected 'layer', got '" + kind + "'");
  const Fields f = parse_fields(ls);
  const std::string& n = field(f, "name");
  Matrix weight = tsr1::load(dir / (n + ".weight.tsr"));
  if (weight.rows() != std::stoul(field(f, "rows")) || weight.cols() != std::stoul(field(f, "cols")))
    throw SchemaError("manifest: shape of " + n + " disagrees with its tensor file");
  std::optional<Matrix> bias;
  if (field(f, "bias") == "1") bias = tsr1::load(dir / (n + ".bias.tsr"));
  FrozenLinear layer(n, std::move(weight), std::move(bias));
  const std::string& adapter = field(f, "adapter");
  if (adapter != "none") {
    SparseLoraModule a;
    a.stage = parse_stage(adapter);
    a.left = tsr1::load(dir / (n + ".left.tsr"));
    a.right = tsr1::load(dir / (n + ".right.tsr"));
    if (field(f, "left_mask") == "1") a.left_mask = tsr1::load(dir / (n + ".left_mask.tsr"));
    if (field(f, "right_mask") == "1") a.right_mask = tsr1::load(dir / (n + ".right_mask.tsr"));
    a.support = split_indices(field(f, "support"));
    a.rho = std::stod(field(f, "rho"));
    layer.attach(std::move(a));
  }
  return layer;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TinyModel& model) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  manifest << "taso-model 1\n"
           << "input_width " << model.input_width() << "\n"
           << "loss " << to_string(model.loss_kind()) << "\n"
           << "targets " << join(model.adapter_targets()) << "\n"
           << "blocks " << model.blocks().size() << "\n";
  for (const Block& b : model.blocks()) {
    if (const auto* d = std::get_if<DenseBlock>(&b)) {
      manifest << "block dense activation=" << to_string(d->activation) << "\n";
      write_layer(manifest, dir, d->linear);
    } else {
      const auto& a = std::get<AttentionBlock>(b);
      manifest << "block attention tokens=" << a.tokens << "\n";
      write_layer(manifest, dir, a.query);
      write_layer(manifest, dir, a.key);
      write_layer(manifest, dir, a.value);
    }
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.txt").string());
}

TinyModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.txt").string());
  std::string magic;
  int version = 0;
  std::string key;
  std::size_t input_width = 0;
  std::string loss;
  std::string targets;
  std::size_t block_count = 0;
  manifest >> magic >> version;
  if (magic != "taso-model" || version != 1) throw SchemaError("manifest: unsupported header");
  manifest >> key >> input_width;
  if (key != "input_width") throw SchemaError("manifest: expected input_width");
  manifest >> key >> loss;
  if (key != "loss") throw SchemaError("manifest: expected loss");
  manifest >> key >> targets;
  if (key != "targets") throw SchemaError("manifest: expected targets");
  manifest >> key >> block_count;
  if (key != "blocks" || !manifest) throw SchemaError("manifest: expected block count");
  std::string rest;
  std::getline(manifest, rest);

  std::vector<Block> blocks;
  for (std::size_t b = 0; b < block_count; ++b) {
    std::string line;
    if (!std::getline(manifest, line)) throw SchemaError("manifest: truncated block list");
    std::istringstream ls(line);
    std::string tag;
    std::string kind;
    ls >> tag >> kind;
    if (tag != "block") throw SchemaError("manifest: expected 'block', got '" + tag + "'");
    const Fields f = parse_fields(ls);
    if (kind == "dense") {
      Activation act = parse_activation(field(f, "activation"));
      blocks.emplace_back(DenseBlock{read_layer(dir, manifest), act});
    } else if (kind == "attention") {
      const std::size_t tokens = std::stoul(field(f, "tokens"));
      FrozenLinear q = read_layer(dir, manifest);
      FrozenLinear k = read_layer(dir, manifest);
      FrozenLinear v = read_layer(dir, manifest);
      blocks.emplace_back(AttentionBlock{std::move(q), std::move(k), std::move(v), tokens});
    } else {
      throw SchemaError("manifest: unknown block kind '" + kind + "'");
    }
  }
  TinyModel model(input_width, std::move(blocks), parse_loss(loss));
  model.set_adapter_targets(split_indices(targets));
  return model;
}

}  // namespace taso
