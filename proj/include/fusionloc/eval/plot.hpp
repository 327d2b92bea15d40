#pragma once

#include <span>

#include <opencv2/core.hpp>

#include "fusionloc/data/world.hpp"
#include "fusionloc/eval/metrics.hpp"

namespace fusionloc::eval {

enum class ErrorKind { position, orientation };

struct PlotOptions {
  int width = 800;
  int height = 800;
  int marker_radius = 4;
  /// Errors above these are outliers and drawn yellow.
  double position_limit_m = 2.0;
  double orientation_limit_deg = 45.0;
};

/// Blue at zero error, red at the limit, linear in between; yellow above it.
cv::Vec3b error_color(double error, double limit);

inline const cv::Vec3b kOutlierColor{255, 255, 0};

/// RGB error map: one filled marker per frame at its ground-truth position,
/// colored by the chosen error. Walls and obstacles of `map` are drawn in gray
/// when given; the view covers the map extent, or the markers otherwise.
cv::Mat render_error_map(std::span<const FrameRecord> records, ErrorKind kind, const data::World* map,
                         const PlotOptions& options = {});

/// Pixel center of a world point in a map rendered by render_error_map.
cv::Point world_to_pixel(const core::Vec2& p, std::span<const FrameRecord> records, const data::World* map,
                         const PlotOptions& options);

}  // namespace fusionloc::eval
