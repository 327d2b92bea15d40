#include "fusionloc/data/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fusionloc/error.hpp"

namespace fusionloc::data {

namespace {

void require_rgb(const cv::Mat& m, const char* what) {
  if (m.empty() || m.type() != CV_8UC3) {
    throw ArgumentError(std::string(what) + ": expected a non-empty 8-bit 3-channel image");
  }
}

/// out = saturate(a * x + b), channel-wise on float data.
void affine_clip(cv::Mat& f, double a, double b) {
  f.convertTo(f, CV_32FC3, a, b);
  cv::min(f, 255.0, f);
  cv::max(f, 0.0, f);
}

double draw_factor(double strength, Rng& rng) {
  if (strength <= 0.0) return 1.0;
  return std::uniform_real_distribution<double>(std::max(0.0, 1.0 - strength), 1.0 + strength)(rng);
}

}  // namespace

cv::Mat read_rgb(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb) {
  require_rgb(rgb, "write_rgb");
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image " + path.string());
}

cv::Mat resize_short_side(const cv::Mat& rgb, std::size_t short_side) {
  require_rgb(rgb, "resize_short_side");
  const double s = static_cast<double>(short_side) / std::min(rgb.cols, rgb.rows);
  const int w = rgb.cols <= rgb.rows ? static_cast<int>(short_side)
                                     : static_cast<int>(std::lround(rgb.cols * s));
  const int h = rgb.rows < rgb.cols ? static_cast<int>(short_side)
                                    : static_cast<int>(std::lround(rgb.rows * s));
  if (w == rgb.cols && h == rgb.rows) return rgb;
  cv::Mat out;
  cv::resize(rgb, out, cv::Size(w, h), 0, 0, s < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

void crop_normalize(const cv::Mat& resized, std::size_t crop, Mode mode, Rng& rng,
                    const ImageNorm& norm, double* out) {
  require_rgb(resized, "crop_normalize");
  const int c = static_cast<int>(crop);
  if (resized.cols < c || resized.rows < c) {
    throw ArgumentError("crop of " + std::to_string(crop) + " exceeds image " +
                        std::to_string(resized.cols) + "x" + std::to_string(resized.rows));
  }
  int x0 = (resized.cols - c) / 2;
  int y0 = (resized.rows - c) / 2;
  if (mode == Mode::train) {
    x0 = std::uniform_int_distribution<int>(0, resized.cols - c)(rng);
    y0 = std::uniform_int_distribution<int>(0, resized.rows - c)(rng);
  }
  const std::size_t plane = crop * crop;
  for (int ch = 0; ch < 3; ++ch) {
    const double scale = 1.0 / (255.0 * norm.stddev[ch]);
    const double shift = norm.mean[ch] / norm.stddev[ch];
    for (int r = 0; r < c; ++r) {
      const auto* row = resized.ptr<cv::Vec3b>(y0 + r) + x0;
      double* dst = out + ch * plane + static_cast<std::size_t>(r) * crop;
      for (int col = 0; col < c; ++col) dst[col] = row[col][ch] * scale - shift;
    }
  }
}

std::vector<double> preprocess_image(const cv::Mat& rgb, Mode mode, Rng& rng, const ImageNorm& norm,
                                     const PreprocessConfig& cfg) {
  std::vector<double> out(3 * cfg.crop * cfg.crop);
  crop_normalize(resize_short_side(rgb, cfg.resize), cfg.crop, mode, rng, norm, out.data());
  return out;
}

cv::Mat color_jitter(const cv::Mat& rgb, const JitterConfig& cfg, Rng& rng) {
  require_rgb(rgb, "color_jitter");
  const double brightness = draw_factor(cfg.brightness, rng);
  const double contrast = draw_factor(cfg.contrast, rng);
  const double saturation = draw_factor(cfg.saturation, rng);
  const double hue = cfg.hue > 0.0 ? std::uniform_real_distribution<double>(-cfg.hue, cfg.hue)(rng) : 0.0;
  if (brightness == 1.0 && contrast == 1.0 && saturation == 1.0 && hue == 0.0) return rgb.clone();

  cv::Mat f;
  rgb.convertTo(f, CV_32FC3);
  if (brightness != 1.0) affine_clip(f, brightness, 0.0);
  if (contrast != 1.0) {
    cv::Mat gray;
    cv::cvtColor(f, gray, cv::COLOR_RGB2GRAY);
    const double m = cv::mean(gray)[0];
    affine_clip(f, contrast, (1.0 - contrast) * m);
  }
  if (saturation != 1.0) {
    cv::Mat gray, gray3;
    cv::cvtColor(f, gray, cv::COLOR_RGB2GRAY);
    cv::cvtColor(gray, gray3, cv::COLOR_GRAY2RGB);
    cv::addWeighted(f, saturation, gray3, 1.0 - saturation, 0.0, f);
    cv::min(f, 255.0, f);
    cv::max(f, 0.0, f);
  }
  cv::Mat out;
  f.convertTo(out, CV_8UC3);
  if (hue != 0.0) {
    cv::Mat hsv;
    cv::cvtColor(out, hsv, cv::COLOR_RGB2HSV_FULL);
    const int shift = static_cast<int>(std::lround(hue * 256.0));
    for (int r = 0; r < hsv.rows; ++r) {
      auto* row = hsv.ptr<cv::Vec3b>(r);
      for (int c = 0; c < hsv.cols; ++c) row[c][0] = static_cast<std::uint8_t>((row[c][0] + shift + 256) & 255);
    }
    cv::cvtColor(hsv, out, cv::COLOR_HSV2RGB_FULL);
  }
  return out;
}

void NormAccumulator::add(const cv::Mat& rgb) {
  require_rgb(rgb, "NormAccumulator::add");
  for (int r = 0; r < rgb.rows; ++r) {
    const auto* row = rgb.ptr<cv::Vec3b>(r);
    for (int c = 0; c < rgb.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = row[c][ch] / 255.0;
        sum_[ch] += v;
        sum_sq_[ch] += v * v;
      }
    }
  }
  count_ += static_cast<double>(rgb.rows) * rgb.cols;
}

ImageNorm NormAccumulator::result() const {
  if (count_ == 0.0) throw DegenerateInputError("image statistics need at least one pixel");
  ImageNorm n;
  for (int ch = 0; ch < 3; ++ch) {
    n.mean[ch] = sum_[ch] / count_;
    const double var = std::max(0.0, sum_sq_[ch] / count_ - n.mean[ch] * n.mean[ch]);
    // Constant channels keep unit scale.
    n.stddev[ch] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return n;
}

}  // namespace fusionloc::data
