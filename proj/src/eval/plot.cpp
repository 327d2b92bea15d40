#include "fusionloc/eval/plot.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "fusionloc/error.hpp"

namespace fusionloc::eval {

namespace {

constexpr int kMargin = 12;

struct View {
  double x0, y0, scale;
  int height;
};

View make_view(std::span<const FrameRecord> records, const data::World* map, const PlotOptions& o) {
  double x0, x1, y0, y1;
  if (map) {
    x0 = -map->extent_x / 2;
    x1 = map->extent_x / 2;
    y0 = -map->extent_y / 2;
    y1 = map->extent_y / 2;
  } else {
    x0 = y0 = INFINITY;
    x1 = y1 = -INFINITY;
    for (const auto& r : records) {
      x0 = std::min(x0, r.truth.x());
      x1 = std::max(x1, r.truth.x());
      y0 = std::min(y0, r.truth.y());
      y1 = std::max(y1, r.truth.y());
    }
    if (records.empty()) x0 = x1 = y0 = y1 = 0.0;
  }
  const double span_x = std::max(x1 - x0, 1e-6);
  const double span_y = std::max(y1 - y0, 1e-6);
  const double scale = std::min((o.width - 2 * kMargin) / span_x, (o.height - 2 * kMargin) / span_y);
  // Centers the content in both directions.
  const double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
  return {cx - (o.width / 2.0) / scale, cy - (o.height / 2.0) / scale, scale, o.height};
}

cv::Point to_pixel(const View& v, const core::Vec2& p) {
  const double px = (p[0] - v.x0) * v.scale;
  const double py = v.height - (p[1] - v.y0) * v.scale;
  return {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
}

}  // namespace

cv::Vec3b error_color(double error, double limit) {
  if (!(error <= limit)) return kOutlierColor;
  const double t = limit > 0.0 ? std::clamp(error / limit, 0.0, 1.0) : 0.0;
  return {static_cast<uchar>(std::lround(255 * t)), 0, static_cast<uchar>(std::lround(255 * (1 - t)))};
}

cv::Point world_to_pixel(const core::Vec2& p, std::span<const FrameRecord> records, const data::World* map,
                         const PlotOptions& options) {
  return to_pixel(make_view(records, map, options), p);
}

cv::Mat render_error_map(std::span<const FrameRecord> records, ErrorKind kind, const data::World* map,
                         const PlotOptions& options) {
  if (options.width < 2 * kMargin + 1 || options.height < 2 * kMargin + 1) {
    throw ArgumentError("plot size must be at least " + std::to_string(2 * kMargin + 1) + " pixels per side");
  }
  cv::Mat img(options.height, options.width, CV_8UC3, cv::Scalar::all(255));
  const View view = make_view(records, map, options);
  if (map) {
    for (const auto& s : map->segments) {
      cv::line(img, to_pixel(view, s.a), to_pixel(view, s.b), cv::Scalar::all(128), 2, cv::LINE_AA);
    }
  }
  const double limit = kind == ErrorKind::position ? options.position_limit_m : options.orientation_limit_deg;
  for (const auto& r : records) {
    const double err = kind == ErrorKind::position ? r.pos_err_m : r.ori_err_deg;
    const cv::Vec3b c = error_color(err, limit);
    cv::circle(img, to_pixel(view, r.truth.position()), options.marker_radius, cv::Scalar(c[0], c[1], c[2]),
               cv::FILLED, cv::LINE_8);
  }
  return img;
}

}  // namespace fusionloc::eval
