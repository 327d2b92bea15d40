#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <opencv2/core.hpp>

#include "fusionloc/core/pose.hpp"

namespace fusionloc::data {

using core::Pose2D;
using core::Vec2;
using Rng = std::mt19937_64;

struct WorldConfig {
  std::uint64_t seed = 0;
  /// Room size in meters; the room is centered on the origin.
  double extent_x = 10.0;
  double extent_y = 10.0;
  std::size_t obstacle_count = 6;
  double lidar_fov_deg = 360.0;
  double lidar_res_deg = 0.35;
  double lidar_max_range = 12.0;
  std::size_t image_width = 420;
  std::size_t image_height = 240;
  double camera_hfov_deg = 87.0;
  /// Distance travelled per frame; also the minimum corridor between obstacles.
  double trajectory_step = 0.3;
  double noise_sigma_range = 0.01;

  void validate() const;
  /// ceil(fov / res): one ray per angular step.
  std::size_t ray_count() const;
};

/// Distance the trajectory keeps from every surface.
inline constexpr double kRobotRadius = 0.25;

struct Segment {
  Vec2 a;
  Vec2 b;
  int color = 0;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(const Vec2& p) const { return p[0] > x0 && p[0] < x1 && p[1] > y0 && p[1] < y1; }
  double distance(const Vec2& p) const;
};

struct World {
  double extent_x = 0.0;
  double extent_y = 0.0;
  std::vector<Box> obstacles;
  /// Every surface a ray can hit: walls first, then obstacle sides.
  std::vector<Segment> segments;

  /// Empty room whose walls are split into panels of roughly `panel` meters,
  /// each with its own color id.
  static World room(double extent_x, double extent_y, double panel = 2.0);
  void add_obstacle(const Box& box);
  /// Strictly inside the room and outside every obstacle.
  bool is_free(const Vec2& p) const;
  /// Distance to the nearest wall or obstacle (0 when not free).
  double clearance(const Vec2& p) const;
  bool operator==(const World&) const;
};

/// Random rectangular obstacles with at least `trajectory_step + 2 * kRobotRadius`
/// of free corridor between any two obstacles and between obstacles and walls.
World generate_world(const WorldConfig& cfg);

struct RayHit {
  double range = 0.0;
  int segment = -1;
  /// Hit position along the segment, meters from its first endpoint.
  double along = 0.0;
};

/// Nearest surface along the ray, if any.
std::optional<RayHit> cast_ray(const World& world, const Vec2& origin, double angle);

/// Scan in the sensor frame. Rays run over [-fov/2, fov/2) in steps of the
/// angular resolution; returns beyond max range are dropped. Gaussian range
/// noise, truncated at 3 sigma, is added only when `noise_rng` is given.
std::vector<Vec2> raycast_scan(const World& world, const Pose2D& pose, const WorldConfig& cfg,
                               Rng* noise_rng);

/// RGB color of a surface id.
cv::Vec3b palette_color(int color);

/// Column raycaster: 8-bit RGB image (CV_8UC3, RGB order) of cfg.image_width x
/// cfg.image_height. Column c looks at theta + hfov/2 - (c + 0.5) * hfov / W.
cv::Mat render_view(const World& world, const Pose2D& pose, const WorldConfig& cfg);

/// Smoothed random waypoint walk through free space: moves `trajectory_step`
/// per frame toward a line-of-sight waypoint while the heading turns toward
/// the direction of travel by at most 30 degrees per frame.
std::vector<Pose2D> generate_trajectory(const World& world, const WorldConfig& cfg,
                                        std::size_t length, Rng& rng);

/// Text form: "room <ex> <ey>" then one "box <x0> <y0> <x1> <y1>" per obstacle.
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

}  // namespace fusionloc::data
