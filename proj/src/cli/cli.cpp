#include "fusionloc/cli/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fusionloc/data/dataset.hpp"
#include "fusionloc/data/text.hpp"
#include "fusionloc/data/world.hpp"
#include "fusionloc/error.hpp"
#include "fusionloc/eval/plot.hpp"
#include "fusionloc/train/ablation.hpp"

#ifndef FUSIONLOC_VERSION
#define FUSIONLOC_VERSION "0.0.0"
#endif

namespace fusionloc::cli {

namespace fs = std::filesystem;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string version() { return FUSIONLOC_VERSION; }

std::string RunManifest::to_text() const {
  std::ostringstream s;
  s << "command " << command << '\n'
    << "version " << version << '\n'
    << "started " << started << '\n'
    << "finished " << finished << '\n'
    << "dataset_hash " << (dataset_hash.empty() ? "-" : dataset_hash) << '\n'
    << "config_hash " << (config ? train::config_hash(*config) : "-") << '\n';
  if (config) s << "[config]\n" << train::dump_run_config(*config);
  return s.str();
}

void RunManifest::save(const fs::path& dir) const { data::write_text(dir / data::kManifestName, to_text()); }

namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
};

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void require_dir(const fs::path& dir, const std::string& what) {
  if (!fs::is_directory(dir)) throw IoError(what + " " + dir.string() + " does not exist");
}

/// Loads, applies FUSIONLOC_SEED and validates; any rejection is a config error.
train::RunConfig load_config(const std::string& path) {
  train::RunConfig cfg;
  if (!path.empty()) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file " + path + " does not exist");
    cfg = train::load_run_config(path);
  }
  train::apply_seed_override(cfg);
  try {
    cfg.validate();
    cfg.generator().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunManifest start_manifest(const std::string& command, const std::optional<train::RunConfig>& cfg) {
  RunManifest m;
  m.command = command;
  m.version = version();
  m.started = utc_timestamp();
  m.config = cfg;
  return m;
}

bool needs_images(const model::ModelConfig& m) { return m.modality != model::Modality::point; }

std::vector<train::Example> load_examples(const fs::path& root, data::Split split, const train::RunConfig& cfg) {
  return train::prepare_examples(train::load_split(root, split, needs_images(cfg.model)), cfg.train.preprocess,
                                 needs_images(cfg.model));
}

auto logger(std::ostream& out) {
  return [&out](const std::string& line) { out << line << std::endl; };
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, Context& ctx) {
  const train::RunConfig cfg = load_config(a.config);
  const fs::path root = a.out;
  if (fs::exists(root)) {
    if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
    const bool empty = fs::is_empty(root);
    if (!empty && !fs::exists(root / data::kManifestName)) {
      throw IoError("refusing to overwrite " + root.string() + ": not empty and not a generated dataset");
    }
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root)) fs::remove_all(e.path(), ec);
    if (ec) throw IoError("cannot clear " + root.string() + ": " + ec.message());
  }
  RunManifest manifest = start_manifest("generate", cfg);
  std::vector<data::SequenceSummary> summary;
  try {
    summary = data::generate_dataset(cfg.generator(), root);
  } catch (const GenerationError& e) {
    throw ConfigError(e.what());
  }
  manifest.dataset_hash = data::dataset_hash(root);
  manifest.finished = utc_timestamp();
  manifest.save(root);

  std::size_t train_frames = 0, eval_frames = 0;
  ctx.out << std::left << std::setw(8) << "set" << std::setw(10) << "sequence" << std::right << std::setw(8)
          << "length" << "  split\n";
  for (const auto& s : summary) {
    ctx.out << std::left << std::setw(8) << s.set << std::setw(10) << s.sequence << std::right << std::setw(8)
            << s.length << "  " << data::split_name(s.split) << '\n';
    (s.split == data::Split::train ? train_frames : eval_frames) += s.length;
  }
  ctx.out << "train frames " << train_frames << ", eval frames " << eval_frames << '\n';
  ctx.out << "dataset hash " << manifest.dataset_hash << '\n';
  return kSuccess;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, Context& ctx) {
  const train::RunConfig cfg = load_config(a.config);
  const fs::path root = a.data, out = a.out;
  require_dir(root, "data directory");
  RunManifest manifest = start_manifest("train", cfg);
  manifest.dataset_hash = data::dataset_hash(root);
  const data::ImageNorm norm = data::load_norm(root / "norm.txt");
  const auto train_examples = load_examples(root, data::Split::train, cfg);
  const auto eval_examples = load_examples(root, data::Split::eval, cfg);
  if (train_examples.empty()) throw IoError(root.string() + " has no training sequences");

  std::unique_ptr<train::Trainer> trainer;
  if (a.resume) {
    trainer = train::Trainer::load(out / "checkpoint");
    if (train::config_hash(trainer->config()) != train::config_hash(cfg)) {
      throw ConfigError("--resume: " + a.config + " differs from the checkpoint's configuration");
    }
    ctx.out << "resuming at epoch " << trainer->epoch() << ", step " << trainer->step_count() << std::endl;
  } else {
    trainer = std::make_unique<train::Trainer>(cfg, norm);
  }
  make_dir(out);
  ctx.out << "training on " << train_examples.size() << " frames, evaluating on " << eval_examples.size()
          << ", batch " << cfg.train.effective_batch_size(cfg.model) << std::endl;
  train::fit(*trainer, train_examples, eval_examples, {out, logger(ctx.out)});
  manifest.finished = utc_timestamp();
  manifest.save(out);
  return kSuccess;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string split = "eval";
};

int cmd_eval(const EvalArgs& a, Context& ctx) {
  const fs::path root = a.data, out = a.out;
  require_dir(root, "data directory");
  data::Split split;
  try {
    split = data::parse_split(a.split);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  auto trainer = train::Trainer::load(a.ckpt);
  const auto& cfg = trainer->config();
  RunManifest manifest = start_manifest("eval", cfg);
  manifest.dataset_hash = data::dataset_hash(root);
  const auto examples = load_examples(root, split, cfg);
  if (examples.empty()) throw IoError(root.string() + " has no " + a.split + " sequences");
  std::vector<eval::FrameRecord> records;
  const auto report = trainer->evaluate(examples, &records);
  make_dir(out);
  eval::save_report(report, out / "report.txt");
  eval::save_dump(records, out / "frames.csv");
  manifest.finished = utc_timestamp();
  manifest.save(out);
  ctx.out << eval::format_report(report);
  return kSuccess;
}

// ---- plot ------------------------------------------------------------------

struct PlotArgs {
  std::string dump;
  std::string out;
  std::string size = "800x800";
  std::string map;
};

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ConfigError("--size expects WxH, got '" + s + "'");
  try {
    const long long w = data::parse_int(s.substr(0, x), "--size");
    const long long h = data::parse_int(s.substr(x + 1), "--size");
    if (w <= 0 || h <= 0 || w > 16384 || h > 16384) throw ConfigError("--size must be within 1..16384");
    return {static_cast<int>(w), static_cast<int>(h)};
  } catch (const FormatError&) {
    throw ConfigError("--size expects WxH, got '" + s + "'");
  }
}

int cmd_plot(const PlotArgs& a, Context& ctx) {
  const auto [w, h] = parse_size(a.size);
  if (!fs::is_regular_file(a.dump)) throw IoError("dump " + a.dump + " does not exist");
  const auto records = eval::load_dump(a.dump);
  std::optional<data::World> map;
  if (!a.map.empty()) {
    if (!fs::is_regular_file(a.map)) throw IoError("map " + a.map + " does not exist");
    map = data::load_world(a.map);
  }
  eval::PlotOptions opts;
  opts.width = w;
  opts.height = h;
  const fs::path out = a.out;
  RunManifest manifest = start_manifest("plot", std::nullopt);
  make_dir(out);
  std::size_t outliers[2] = {0, 0};
  for (const auto& r : records) {
    outliers[0] += !(r.pos_err_m <= opts.position_limit_m);
    outliers[1] += !(r.ori_err_deg <= opts.orientation_limit_deg);
  }
  try {
    data::write_rgb(out / "position.png",
                    eval::render_error_map(records, eval::ErrorKind::position, map ? &*map : nullptr, opts));
    data::write_rgb(out / "orientation.png",
                    eval::render_error_map(records, eval::ErrorKind::orientation, map ? &*map : nullptr, opts));
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  manifest.finished = utc_timestamp();
  manifest.save(out);
  ctx.out << records.size() << " frames, " << outliers[0] << " position outliers, " << outliers[1]
          << " orientation outliers\n";
  return kSuccess;
}

// ---- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::size_t> d_image{256};
  std::vector<std::size_t> d_point{256};
  std::vector<std::size_t> heads{1};
  std::vector<std::size_t> layers{1};
  std::vector<std::string> norms{"batch"};
};

int cmd_ablate(const AblateArgs& a, Context& ctx) {
  const train::RunConfig cfg = load_config(a.config);
  train::AblationGrid grid{a.d_image, a.d_point, a.heads, a.layers, {}};
  for (const auto& n : a.norms) {
    if (n == "batch") grid.norms.push_back(model::NormKind::batch);
    else if (n == "layer") grid.norms.push_back(model::NormKind::layer);
    else throw ConfigError("--norm expects batch or layer, got '" + n + "'");
  }
  grid.validate();
  const fs::path root = a.data, out = a.out;
  require_dir(root, "data directory");
  RunManifest manifest = start_manifest("ablate", cfg);
  manifest.dataset_hash = data::dataset_hash(root);
  const data::ImageNorm norm = data::load_norm(root / "norm.txt");
  const auto train_examples = load_examples(root, data::Split::train, cfg);
  const auto eval_examples = load_examples(root, data::Split::eval, cfg);
  if (train_examples.empty()) throw IoError(root.string() + " has no training sequences");
  make_dir(out);
  const auto rows = train::run_ablation(grid, cfg, norm, train_examples, eval_examples, {out, logger(ctx.out)});
  train::save_ablation_table(rows, out / "ablation.txt");
  train::save_trajectories(rows, out / "trajectories.csv");
  manifest.finished = utc_timestamp();
  manifest.save(out);
  ctx.out << train::format_ablation_table(rows);
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Camera and 2D LiDAR pose regression", "fusionloc"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Render a synthetic dataset");
  gen->add_option("--config", ga.config, "Run configuration file (defaults when omitted)");
  gen->add_option("--out", ga.out, "Dataset directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "Run configuration file")->required();
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_flag("--resume", ta.resume, "Continue from <out>/checkpoint");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--out", ea.out, "Output directory")->required();
  ev->add_option("--split", ea.split, "eval or train")->capture_default_str();

  PlotArgs pa;
  auto* pl = app.add_subcommand("plot", "Render error maps from a per-frame dump");
  pl->add_option("--dump", pa.dump, "frames.csv written by eval")->required();
  pl->add_option("--out", pa.out, "Output directory")->required();
  pl->add_option("--size", pa.size, "Image size WxH")->capture_default_str();
  pl->add_option("--map", pa.map, "world.txt drawn underneath");

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "Train one model per fusion grid cell");
  ab->add_option("--config", aa.config, "Base run configuration file")->required();
  ab->add_option("--data", aa.data, "Dataset directory")->required();
  ab->add_option("--out", aa.out, "Output directory")->required();
  ab->add_option("--d-image", aa.d_image, "Image feature dimensions")->delimiter(',')->capture_default_str();
  ab->add_option("--d-point", aa.d_point, "Point feature dimensions")->delimiter(',')->capture_default_str();
  ab->add_option("--heads", aa.heads, "Attention head counts")->delimiter(',')->capture_default_str();
  ab->add_option("--layers", aa.layers, "Attention layer counts")->delimiter(',')->capture_default_str();
  ab->add_option("--norm", aa.norms, "batch and/or layer")->delimiter(',')->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  Context ctx{out, err};
  try {
    if (*gen) return cmd_generate(ga, ctx);
    if (*tr) return cmd_train(ta, ctx);
    if (*ev) return cmd_eval(ea, ctx);
    if (*pl) return cmd_plot(pa, ctx);
    if (*ab) return cmd_ablate(aa, ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const FormatError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const ConsistencyError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericError& e) {
    err << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace fusionloc::cli
