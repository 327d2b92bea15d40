#include "fusionloc/train/pipeline.hpp"

#include "fusionloc/data/scan.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::train {

std::vector<Example> prepare_examples(const std::vector<data::Sequence>& sequences,
                                      const data::PreprocessConfig& preprocess, bool with_images) {
  std::vector<Example> out;
  for (const auto& seq : sequences) {
    for (const auto& s : seq.samples) {
      Example e{seq.id, s.frame_index, {}, s.scan, s.pose};
      if (with_images) {
        if (s.image.empty()) throw ArgumentError("sequence " + seq.id + " was loaded without images");
        e.image = data::resize_short_side(s.image, preprocess.resize);
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<data::Sequence> load_split(const std::filesystem::path& root, data::Split split, bool with_images) {
  std::vector<data::Sequence> out;
  for (const auto& dir : data::find_sequences(root)) {
    auto seq = data::load_sequence(dir, {.images = with_images});
    if (seq.split != split) continue;
    // Sequence ids are only unique within a set.
    seq.id = dir.parent_path().filename().string() + "/" + seq.id;
    out.push_back(std::move(seq));
  }
  return out;
}

BatchOptions batch_options(const model::ModelConfig& model, const data::PreprocessConfig& preprocess,
                           const data::JitterConfig& jitter, const data::ImageNorm& norm, data::Mode mode) {
  BatchOptions o;
  o.mode = mode;
  o.preprocess = preprocess;
  o.jitter = jitter;
  o.norm = norm;
  o.n_fixed = model.point.n_fixed;
  o.images = model.modality != model::Modality::point;
  o.scans = model.modality != model::Modality::image;
  return o;
}

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices,
                 const BatchOptions& options, Rng& rng) {
  if (indices.empty()) throw ArgumentError("make_batch: empty batch");
  const std::size_t b = indices.size();
  const std::size_t s = options.preprocess.crop;
  const std::size_t plane = 3 * s * s;
  nn::Buffer images(options.images ? b * plane : 0);
  nn::Buffer scans(options.scans ? b * options.n_fixed * 2 : 0);
  nn::Buffer position(2 * b);
  nn::Buffer orientation(2 * b);
  const bool train = options.mode == data::Mode::train;
  for (std::size_t i = 0; i < b; ++i) {
    if (indices[i] >= examples.size()) throw ArgumentError("make_batch: index out of range");
    const Example& e = examples[indices[i]];
    if (options.images) {
      if (e.image.empty()) throw ArgumentError("make_batch: example has no image");
      const cv::Mat img = train && options.jitter.enabled() ? data::color_jitter(e.image, options.jitter, rng) : e.image;
      data::crop_normalize(img, s, options.mode, rng, options.norm, images.data() + i * plane);
    }
    if (options.scans) {
      const auto pts = data::sample_scan(e.scan, options.n_fixed, options.mode, rng);
      std::copy(pts.begin(), pts.end(), scans.begin() + static_cast<std::ptrdiff_t>(i * options.n_fixed * 2));
    }
    position[2 * i] = e.pose.x();
    position[2 * i + 1] = e.pose.y();
    const auto q = e.pose.heading_vec();
    orientation[2 * i] = q[0];
    orientation[2 * i + 1] = q[1];
  }
  Batch out;
  if (options.images) out.input.images = nn::Tensor::from({b, 3, s, s}, std::move(images));
  if (options.scans) out.input.scans = nn::Tensor::from({b, options.n_fixed, 2}, std::move(scans));
  out.position = nn::Tensor::from({b, 2}, std::move(position));
  out.orientation = nn::Tensor::from({b, 2}, std::move(orientation));
  return out;
}

}  // namespace fusionloc::train
