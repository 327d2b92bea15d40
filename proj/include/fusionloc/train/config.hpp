#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fusionloc/data/dataset.hpp"
#include "fusionloc/data/image.hpp"
#include "fusionloc/model/network.hpp"

namespace fusionloc::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  std::size_t epochs = 1000;
  /// Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  /// 0 selects 256, or 64 when d_image = d_point = 2048.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  /// Evaluation interval in epochs; 0 evaluates only at the end.
  std::size_t eval_every = 100;
  data::PreprocessConfig preprocess;
  data::JitterConfig jitter;

  std::size_t effective_batch_size(const model::ModelConfig& model) const;
  void validate(const model::ModelConfig& model) const;
};

/// `sets` environments, each cut into sequences of the given lengths; the
/// 1-based `eval_sequences` are held out in every set.
struct DatasetLayout {
  std::size_t sets = 1;
  std::vector<std::size_t> lengths{394, 374, 389, 359, 429, 401, 390, 404, 408, 416};
  std::vector<std::size_t> eval_sequences{3, 6, 9};

  /// Ids "set-NN" and "seq-NN".
  std::vector<data::SetSpec> specs() const;
  void validate() const;
};

/// Everything one run depends on: dataset generation, network and optimization.
struct RunConfig {
  data::WorldConfig world;
  DatasetLayout layout;
  model::ModelConfig model;
  TrainConfig train;

  data::GeneratorConfig generator() const { return {world, layout.specs()}; }

  void validate() const;
};

/// Layered key = value text with [world], [dataset], [model] and [train]
/// sections. Keys left out keep their defaults; unknown keys are errors.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "config");
RunConfig load_run_config(const std::filesystem::path& path);
/// Complete canonical dump; dumping the parsed dump reproduces it.
std::string dump_run_config(const RunConfig& cfg);
/// SHA-256 of the canonical dump.
std::string config_hash(const RunConfig& cfg);

/// Replaces the world and training seeds when FUSIONLOC_SEED is set; returns
/// whether it was. A malformed value is a ConfigError.
bool apply_seed_override(RunConfig& cfg);

}  // namespace fusionloc::train
