#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <vector>

#include <opencv2/core.hpp>

namespace fusionloc::data {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

/// Per-channel statistics of pixel values scaled to [0, 1].
struct ImageNorm {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

struct PreprocessConfig {
  /// Target length of the short side after resizing.
  std::size_t resize = 256;
  /// Side of the square crop.
  std::size_t crop = 256;
};

struct JitterConfig {
  double brightness = 0.7;
  double contrast = 0.7;
  double saturation = 0.7;
  double hue = 0.5;
  bool enabled() const { return brightness > 0 || contrast > 0 || saturation > 0 || hue > 0; }
};

/// Reads an 8-bit PNG into an RGB CV_8UC3 matrix.
cv::Mat read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb);

/// Scales so the short side equals `short_side`, preserving aspect ratio
/// (long side rounded to the nearest pixel). Same-size input is returned as is.
cv::Mat resize_short_side(const cv::Mat& rgb, std::size_t short_side);

/// Crops `crop` x `crop` (random offset in train mode, centered in eval mode)
/// from an already resized image and normalizes it into `out` as CHW floats.
void crop_normalize(const cv::Mat& resized, std::size_t crop, Mode mode, Rng& rng,
                    const ImageNorm& norm, double* out);

/// resize_short_side then crop_normalize; returns 3 * crop * crop values.
std::vector<double> preprocess_image(const cv::Mat& rgb, Mode mode, Rng& rng, const ImageNorm& norm,
                                     const PreprocessConfig& cfg = {});

/// Brightness, contrast and saturation factors drawn from
/// [max(0, 1 - s), 1 + s], hue shifted by a fraction of the color circle in
/// [-h, h]; applied in that order with 8-bit saturation after each step. Zero
/// strength leaves the image unchanged.
cv::Mat color_jitter(const cv::Mat& rgb, const JitterConfig& cfg, Rng& rng);

/// Running per-channel mean and standard deviation over every pixel added.
class NormAccumulator {
 public:
  void add(const cv::Mat& rgb);
  ImageNorm result() const;

 private:
  std::array<double, 3> sum_{};
  std::array<double, 3> sum_sq_{};
  double count_ = 0.0;
};

}  // namespace fusionloc::data
