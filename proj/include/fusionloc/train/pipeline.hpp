#pragma once

#include <span>
#include <string>
#include <vector>

#include "fusionloc/data/dataset.hpp"
#include "fusionloc/data/image.hpp"
#include "fusionloc/model/network.hpp"

namespace fusionloc::train {

using nn::Rng;

/// A frame ready for batching: the image is already resized to the training
/// short side, so only jitter, crop and normalization remain per draw.
struct Example {
  std::string sequence;
  std::size_t frame = 0;
  cv::Mat image;
  std::vector<core::Vec2> scan;
  core::Pose2D pose;
};

/// Flattens sequences into examples, resizing images once. Images are
/// skipped when `with_images` is false.
std::vector<Example> prepare_examples(const std::vector<data::Sequence>& sequences,
                                      const data::PreprocessConfig& preprocess, bool with_images = true);

/// Loads every sequence of the given split under a dataset root.
std::vector<data::Sequence> load_split(const std::filesystem::path& root, data::Split split,
                                       bool with_images = true);

struct BatchOptions {
  data::Mode mode = data::Mode::eval;
  data::PreprocessConfig preprocess;
  data::JitterConfig jitter;
  data::ImageNorm norm;
  std::size_t n_fixed = 1024;
  bool images = true;
  bool scans = true;
};

struct Batch {
  model::ModelInput input;
  nn::Tensor position;     // [B, 2]
  nn::Tensor orientation;  // [B, 2], exact unit [cos, sin]
};

/// Draws in a fixed order per example: jitter (train mode only), crop, then
/// scan sampling; all from `rng`.
Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices,
                 const BatchOptions& options, Rng& rng);

/// Batch options matching a model: branches it lacks get no input.
BatchOptions batch_options(const model::ModelConfig& model, const data::PreprocessConfig& preprocess,
                           const data::JitterConfig& jitter, const data::ImageNorm& norm, data::Mode mode);

}  // namespace fusionloc::train
