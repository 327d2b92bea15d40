#include "fusionloc/train/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fusionloc/data/hash.hpp"
#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::train {

namespace {

using data::format_double;

struct Field {
  const char* section;
  const char* key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

double to_double(std::string_view v) { return data::parse_double(v, "value"); }

std::size_t to_size(std::string_view v) {
  const auto n = data::parse_int(v, "value");
  if (n < 0) throw FormatError("value must be non-negative, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw FormatError("expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_sizes(std::string_view v) {
  std::vector<std::size_t> out;
  for (auto t : data::split_ws(v)) out.push_back(to_size(t));
  return out;
}

std::string from_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    out.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) return out;
    start = at + 1;
  }
}

/// "<points>:<radius>:<samples>:<w1>,<w2>,..." per layer, whitespace separated.
std::vector<model::SetAbstractionParams> to_sa_layers(std::string_view v) {
  std::vector<model::SetAbstractionParams> out;
  for (auto layer : data::split_ws(v)) {
    const auto parts = split_on(layer, ':');
    if (parts.size() != 4) throw FormatError("set abstraction layer '" + std::string(layer) +
                                             "' must be points:radius:samples:widths");
    model::SetAbstractionParams p;
    p.point_num = to_size(parts[0]);
    p.radius = to_double(parts[1]);
    p.sample_num = to_size(parts[2]);
    for (auto w : split_on(parts[3], ',')) p.mlp_widths.push_back(to_size(w));
    out.push_back(std::move(p));
  }
  return out;
}

std::string from_sa_layers(const std::vector<model::SetAbstractionParams>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& p = layers[i];
    out += (i ? " " : "") + std::to_string(p.point_num) + ':' + format_double(p.radius) + ':' +
           std::to_string(p.sample_num) + ':';
    for (std::size_t j = 0; j < p.mlp_widths.size(); ++j) out += (j ? "," : "") + std::to_string(p.mlp_widths[j]);
  }
  return out;
}

template <typename E>
E to_enum(std::string_view v, std::initializer_list<std::pair<const char*, E>> names) {
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (v == name) return value;
    allowed += std::string(allowed.empty() ? "" : ", ") + name;
  }
  throw FormatError("expected one of " + allowed + ", got '" + std::string(v) + "'");
}

template <typename E>
std::string from_enum(E e, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names) {
    if (value == e) return name;
  }
  return "?";
}

const std::initializer_list<std::pair<const char*, model::Modality>> kModality{
    {"fused", model::Modality::fused}, {"image", model::Modality::image}, {"point", model::Modality::point}};
const std::initializer_list<std::pair<const char*, model::FusionMode>> kFusionMode{
    {"concat", model::FusionMode::concat}, {"mhsa", model::FusionMode::mhsa}};
const std::initializer_list<std::pair<const char*, model::NormKind>> kNorm{
    {"batch", model::NormKind::batch}, {"layer", model::NormKind::layer}};

#define FL_DOUBLE(sec, name, expr) \
  Field{sec, name, [&] { return format_double(expr); }, [&](std::string_view v) { expr = to_double(v); }}
#define FL_SIZE(sec, name, expr) \
  Field{sec, name, [&] { return std::to_string(expr); }, [&](std::string_view v) { expr = to_size(v); }}
#define FL_SIZES(sec, name, expr) \
  Field{sec, name, [&] { return from_sizes(expr); }, [&](std::string_view v) { expr = to_sizes(v); }}
#define FL_ENUM(sec, name, expr, table) \
  Field{sec, name, [&] { return from_enum(expr, table); }, [&](std::string_view v) { expr = to_enum(v, table); }}

std::vector<Field> fields(RunConfig& c) {
  auto& w = c.world;
  auto& m = c.model;
  auto& t = c.train;
  return {
      FL_SIZE("world", "seed", w.seed),
      FL_DOUBLE("world", "extent_x", w.extent_x),
      FL_DOUBLE("world", "extent_y", w.extent_y),
      FL_SIZE("world", "obstacle_count", w.obstacle_count),
      FL_DOUBLE("world", "lidar_fov_deg", w.lidar_fov_deg),
      FL_DOUBLE("world", "lidar_res_deg", w.lidar_res_deg),
      FL_DOUBLE("world", "lidar_max_range", w.lidar_max_range),
      FL_SIZE("world", "image_width", w.image_width),
      FL_SIZE("world", "image_height", w.image_height),
      FL_DOUBLE("world", "camera_hfov_deg", w.camera_hfov_deg),
      FL_DOUBLE("world", "trajectory_step", w.trajectory_step),
      FL_DOUBLE("world", "noise_sigma_range", w.noise_sigma_range),

      FL_SIZE("dataset", "sets", c.layout.sets),
      FL_SIZES("dataset", "lengths", c.layout.lengths),
      FL_SIZES("dataset", "eval_sequences", c.layout.eval_sequences),

      FL_ENUM("model", "modality", m.modality, kModality),
      FL_ENUM("model", "fusion", m.fusion.mode, kFusionMode),
      FL_SIZE("model", "d_image", m.image.d_image),
      FL_SIZE("model", "d_point", m.point.d_point),
      FL_SIZE("model", "heads", m.fusion.heads),
      FL_SIZE("model", "layers", m.fusion.layers),
      FL_ENUM("model", "norm", m.fusion.norm, kNorm),
      FL_SIZES("model", "backbone_blocks", m.image.backbone.blocks),
      FL_SIZE("model", "backbone_width", m.image.backbone.base_width),
      Field{"model", "dropout", [&] { return std::string(m.image.dropout ? "true" : "false"); },
            [&](std::string_view v) { m.image.dropout = to_bool(v); }},
      FL_DOUBLE("model", "dropout_p", m.image.dropout_p),
      Field{"model", "pretrained", [&] { return m.image.pretrained.string(); },
            [&](std::string_view v) { m.image.pretrained = std::string(v); }},
      FL_SIZE("model", "n_fixed", m.point.n_fixed),
      Field{"model", "sa_layers", [&] { return from_sa_layers(m.point.layers); },
            [&](std::string_view v) { m.point.layers = to_sa_layers(v); }},
      FL_SIZE("model", "head_hidden", m.head_hidden),

      FL_DOUBLE("train", "learning_rate", t.learning_rate),
      FL_DOUBLE("train", "weight_decay", t.weight_decay),
      FL_SIZE("train", "epochs", t.epochs),
      FL_SIZE("train", "max_steps", t.max_steps),
      FL_SIZE("train", "batch_size", t.batch_size),
      FL_SIZE("train", "seed", t.seed),
      FL_SIZE("train", "eval_every", t.eval_every),
      FL_SIZE("train", "resize", t.preprocess.resize),
      FL_SIZE("train", "crop", t.preprocess.crop),
      FL_DOUBLE("train", "jitter_brightness", t.jitter.brightness),
      FL_DOUBLE("train", "jitter_contrast", t.jitter.contrast),
      FL_DOUBLE("train", "jitter_saturation", t.jitter.saturation),
      FL_DOUBLE("train", "jitter_hue", t.jitter.hue),
  };
}

#undef FL_DOUBLE
#undef FL_SIZE
#undef FL_SIZES
#undef FL_ENUM

}  // namespace

std::size_t TrainConfig::effective_batch_size(const model::ModelConfig& model) const {
  if (batch_size != 0) return batch_size;
  return model.image.d_image == 2048 && model.point.d_point == 2048 ? 64 : 256;
}

void TrainConfig::validate(const model::ModelConfig& model) const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight decay must be finite and non-negative");
  }
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (preprocess.crop == 0 || preprocess.crop > preprocess.resize) {
    throw ConfigError("crop must be positive and no larger than the resized short side");
  }
  for (double s : {jitter.brightness, jitter.contrast, jitter.saturation}) {
    if (!(s >= 0.0)) throw ConfigError("jitter strengths must be non-negative");
  }
  if (!(jitter.hue >= 0.0 && jitter.hue <= 0.5)) throw ConfigError("hue jitter must be in [0, 0.5]");
  const bool batch_norm = model.modality == model::Modality::fused &&
                          model.fusion.mode == model::FusionMode::mhsa &&
                          model.fusion.norm == model::NormKind::batch;
  const std::size_t batch = effective_batch_size(model);
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (batch_norm && batch < 2) throw ConfigError("batch normalization in the fusion stack needs batch_size >= 2");
}

std::vector<data::SetSpec> DatasetLayout::specs() const {
  validate();
  std::vector<data::SetSpec> out;
  for (std::size_t s = 0; s < sets; ++s) {
    char id[16];
    std::snprintf(id, sizeof id, "set-%02zu", s + 1);
    data::SetSpec set{id, {}};
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      char seq[16];
      std::snprintf(seq, sizeof seq, "seq-%02zu", i + 1);
      const bool eval = std::find(eval_sequences.begin(), eval_sequences.end(), i + 1) != eval_sequences.end();
      set.sequences.push_back({seq, lengths[i], eval ? data::Split::eval : data::Split::train});
    }
    out.push_back(std::move(set));
  }
  return out;
}

void DatasetLayout::validate() const {
  if (sets == 0 || sets > 99) throw ConfigError("dataset sets must be in [1, 99]");
  if (lengths.empty() || lengths.size() > 99) throw ConfigError("dataset needs 1 to 99 sequence lengths");
  for (auto l : lengths) {
    if (l == 0) throw ConfigError("sequence lengths must be positive");
  }
  for (auto e : eval_sequences) {
    if (e == 0 || e > lengths.size()) {
      throw ConfigError("eval sequence " + std::to_string(e) + " is outside 1.." + std::to_string(lengths.size()));
    }
  }
}

void RunConfig::validate() const {
  world.validate();
  layout.validate();
  model.validate();
  train.validate(model);
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  auto table = fields(cfg);
  std::map<std::string, Field*> index;
  for (auto& f : table) index[std::string(f.section) + "." + f.key] = &f;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' must be inside a section");
    }
    for (const auto& [key, value] : keys) {
      const std::string name = section + "." + key;
      const auto it = index.find(name);
      if (it == index.end()) throw ConfigError(origin + ": unknown key '" + name + "'");
      try {
        it->second->set(value.data());
      } catch (const FormatError& e) {
        throw ConfigError(origin + ": " + name + ": " + e.what());
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  for (const auto& line : data::read_lines(path)) text += line + '\n';
  return parse_run_config(text, path.string());
}

std::string dump_run_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get() + '\n';
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return data::sha256_hex(dump_run_config(cfg)); }

bool apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("FUSIONLOC_SEED");
  if (!env) return false;
  const std::string_view v(env);
  long long seed = 0;
  try {
    seed = data::parse_int(v, "FUSIONLOC_SEED");
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  if (seed < 0) throw ConfigError("FUSIONLOC_SEED must be non-negative");
  cfg.world.seed = static_cast<std::uint64_t>(seed);
  cfg.train.seed = static_cast<std::uint64_t>(seed);
  return true;
}

}  // namespace fusionloc::train
