#include "fusionloc/data/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::data {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWallHeight = 2.5;
constexpr double kCameraHeight = 1.0;
constexpr double kStripePeriod = 0.5;
constexpr double kMaxTurn = kPi / 6.0;
constexpr int kMaxAttempts = 2000;

double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

double corridor(const WorldConfig& cfg) { return cfg.trajectory_step + 2.0 * kRobotRadius; }

double box_gap(const Box& a, const Box& b) {
  const double dx = std::max({0.0, a.x0 - b.x1, b.x0 - a.x1});
  const double dy = std::max({0.0, a.y0 - b.y1, b.y0 - a.y1});
  return std::hypot(dx, dy);
}

void add_wall(World& w, const Vec2& a, const Vec2& b, double panel, int& next_color) {
  const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(len / panel)));
  for (std::size_t i = 0; i < n; ++i) {
    const double t0 = static_cast<double>(i) / static_cast<double>(n);
    const double t1 = static_cast<double>(i + 1) / static_cast<double>(n);
    w.segments.push_back({{a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1])},
                          {a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1])},
                          next_color++});
  }
}

int next_color_id(const World& w) {
  int c = 0;
  for (const auto& s : w.segments) c = std::max(c, s.color + 1);
  return c;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const double ex = b[0] - a[0], ey = b[1] - a[1];
  const double len2 = ex * ex + ey * ey;
  const double t = len2 == 0.0 ? 0.0 : std::clamp(((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2, 0.0, 1.0);
  return std::hypot(a[0] + t * ex - p[0], a[1] + t * ey - p[1]);
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto side = [](const Vec2& o, const Vec2& p, const Vec2& q) {
    return cross({p[0] - o[0], p[1] - o[1]}, {q[0] - o[0], q[1] - o[1]});
  };
  const double d1 = side(c, d, a), d2 = side(c, d, b), d3 = side(a, b, c), d4 = side(a, b, d);
  return ((d1 > 0) != (d2 > 0) || d1 == 0 || d2 == 0) && ((d3 > 0) != (d4 > 0) || d3 == 0 || d4 == 0);
}

/// Exact distance from the segment ab to every surface; both ends free.
bool line_of_sight(const World& w, const Vec2& a, const Vec2& b, double clearance) {
  if (!w.is_free(a) || !w.is_free(b)) return false;
  for (const auto& s : w.segments) {
    if (segments_intersect(a, b, s.a, s.b)) return false;
    const double d = std::min({point_segment_distance(a, s.a, s.b), point_segment_distance(b, s.a, s.b),
                               point_segment_distance(s.a, a, b), point_segment_distance(s.b, a, b)});
    if (d < clearance) return false;
  }
  return true;
}

Vec2 random_free_point(const World& w, double clearance, Rng& rng) {
  std::uniform_real_distribution<double> ux(-w.extent_x / 2, w.extent_x / 2);
  std::uniform_real_distribution<double> uy(-w.extent_y / 2, w.extent_y / 2);
  for (int i = 0; i < kMaxAttempts; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    if (w.clearance(p) >= clearance) return p;
  }
  throw GenerationError("no free position with " + format_double(clearance) + " m clearance");
}

}  // namespace

void WorldConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(extent_x) || !positive(extent_y)) throw ConfigError("world extent must be positive");
  if (!positive(lidar_res_deg)) throw ConfigError("lidar angular resolution must be positive");
  if (!positive(lidar_fov_deg) || lidar_fov_deg > 360.0) {
    throw ConfigError("lidar field of view must be in (0, 360] degrees");
  }
  if (!positive(lidar_max_range)) throw ConfigError("lidar max range must be positive");
  if (!(camera_hfov_deg > 0.0 && camera_hfov_deg < 180.0)) {
    throw ConfigError("camera horizontal field of view must be in (0, 180) degrees");
  }
  if (image_width == 0 || image_height == 0) throw ConfigError("image size must be positive");
  if (!positive(trajectory_step)) throw ConfigError("trajectory step must be positive");
  if (!(noise_sigma_range >= 0.0)) throw ConfigError("range noise sigma must be non-negative");
  const double free = 2.0 * (kRobotRadius + 0.05);
  if (extent_x <= free || extent_y <= free) {
    throw ConfigError("world extent leaves no room for the robot");
  }
}

std::size_t WorldConfig::ray_count() const {
  return static_cast<std::size_t>(std::ceil(lidar_fov_deg / lidar_res_deg - 1e-9));
}

double Box::distance(const Vec2& p) const {
  const double dx = std::max({0.0, x0 - p[0], p[0] - x1});
  const double dy = std::max({0.0, y0 - p[1], p[1] - y1});
  return std::hypot(dx, dy);
}

World World::room(double extent_x, double extent_y, double panel) {
  World w;
  w.extent_x = extent_x;
  w.extent_y = extent_y;
  const double hx = extent_x / 2;
  const double hy = extent_y / 2;
  int color = 0;
  add_wall(w, {-hx, -hy}, {hx, -hy}, panel, color);
  add_wall(w, {hx, -hy}, {hx, hy}, panel, color);
  add_wall(w, {hx, hy}, {-hx, hy}, panel, color);
  add_wall(w, {-hx, hy}, {-hx, -hy}, panel, color);
  return w;
}

void World::add_obstacle(const Box& box) {
  obstacles.push_back(box);
  int color = next_color_id(*this);
  const Vec2 c00{box.x0, box.y0}, c10{box.x1, box.y0}, c11{box.x1, box.y1}, c01{box.x0, box.y1};
  segments.push_back({c00, c10, color++});
  segments.push_back({c10, c11, color++});
  segments.push_back({c11, c01, color++});
  segments.push_back({c01, c00, color++});
}

bool World::is_free(const Vec2& p) const {
  if (std::abs(p[0]) >= extent_x / 2 || std::abs(p[1]) >= extent_y / 2) return false;
  return std::none_of(obstacles.begin(), obstacles.end(), [&](const Box& b) { return b.contains(p); });
}

double World::clearance(const Vec2& p) const {
  if (!is_free(p)) return 0.0;
  double d = std::min(extent_x / 2 - std::abs(p[0]), extent_y / 2 - std::abs(p[1]));
  for (const auto& b : obstacles) d = std::min(d, b.distance(p));
  return d;
}

bool World::operator==(const World& o) const {
  auto same_box = [](const Box& a, const Box& b) {
    return a.x0 == b.x0 && a.y0 == b.y0 && a.x1 == b.x1 && a.y1 == b.y1;
  };
  auto same_seg = [](const Segment& a, const Segment& b) {
    return a.a == b.a && a.b == b.b && a.color == b.color;
  };
  return extent_x == o.extent_x && extent_y == o.extent_y &&
         std::equal(obstacles.begin(), obstacles.end(), o.obstacles.begin(), o.obstacles.end(), same_box) &&
         std::equal(segments.begin(), segments.end(), o.segments.begin(), o.segments.end(), same_seg);
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w = World::room(cfg.extent_x, cfg.extent_y);
  Rng rng(cfg.seed);
  const double gap = corridor(cfg);
  const double hx = cfg.extent_x / 2 - gap;
  const double hy = cfg.extent_y / 2 - gap;
  const double max_side = std::min({2.0, hx, hy});
  if (cfg.obstacle_count > 0 && max_side < 0.4) {
    throw GenerationError("room too small for obstacles with " + format_double(gap) + " m corridors");
  }
  std::uniform_real_distribution<double> side(0.4, std::max(0.4, max_side));
  for (std::size_t i = 0; i < cfg.obstacle_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const double sx = side(rng);
      const double sy = side(rng);
      const double x0 = std::uniform_real_distribution<double>(-hx, hx - sx)(rng);
      const double y0 = std::uniform_real_distribution<double>(-hy, hy - sy)(rng);
      const Box b{x0, y0, x0 + sx, y0 + sy};
      placed = std::all_of(w.obstacles.begin(), w.obstacles.end(),
                           [&](const Box& o) { return box_gap(o, b) >= gap; });
      if (placed) w.add_obstacle(b);
    }
    if (!placed) {
      throw GenerationError("could not place obstacle " + std::to_string(i + 1) + " of " +
                            std::to_string(cfg.obstacle_count) + " after " +
                            std::to_string(kMaxAttempts) + " attempts");
    }
  }
  return w;
}

std::optional<RayHit> cast_ray(const World& world, const Vec2& origin, double angle) {
  const Vec2 d{std::cos(angle), std::sin(angle)};
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < world.segments.size(); ++i) {
    const auto& s = world.segments[i];
    const Vec2 e{s.b[0] - s.a[0], s.b[1] - s.a[1]};
    const double denom = cross(d, e);
    if (std::abs(denom) < 1e-12) continue;
    const Vec2 ao{s.a[0] - origin[0], s.a[1] - origin[1]};
    const double t = cross(ao, e) / denom;
    const double u = cross(ao, d) / denom;
    if (t <= 1e-9 || u < 0.0 || u > 1.0) continue;
    if (!best || t < best->range) {
      best = RayHit{t, static_cast<int>(i), u * std::hypot(e[0], e[1])};
    }
  }
  return best;
}

std::vector<Vec2> raycast_scan(const World& world, const Pose2D& pose, const WorldConfig& cfg,
                               Rng* noise_rng) {
  if (!world.is_free(pose.position())) {
    throw InvalidPoseError("sensor pose (" + format_double(pose.x()) + ", " + format_double(pose.y()) +
                           ") is not in free space");
  }
  const std::size_t n = cfg.ray_count();
  const double res = core::deg_to_rad(cfg.lidar_res_deg);
  const double start = -core::deg_to_rad(cfg.lidar_fov_deg) / 2.0;
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma_range);
  std::vector<Vec2> scan;
  scan.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start + static_cast<double>(i) * res;
    const auto hit = cast_ray(world, pose.position(), pose.theta() + a);
    if (!hit) continue;
    double r = hit->range;
    if (noise_rng && cfg.noise_sigma_range > 0.0) {
      r += std::clamp(noise(*noise_rng), -3.0 * cfg.noise_sigma_range, 3.0 * cfg.noise_sigma_range);
    }
    if (hit->range > cfg.lidar_max_range || r > cfg.lidar_max_range || r <= 0.0) continue;
    scan.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return scan;
}

cv::Vec3b palette_color(int color) {
  // Hues step by the golden angle; saturation and value cycle so neighbors differ.
  const double hue = std::fmod(static_cast<double>(color) * 0.618033988749895, 1.0) * 180.0;
  const int sat = 150 + 50 * (color % 3);
  const int val = 170 + 40 * ((color / 3) % 3);
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue, sat, std::min(val, 255)));
  cv::Mat rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  return rgb.at<cv::Vec3b>(0, 0);
}

cv::Mat render_view(const World& world, const Pose2D& pose, const WorldConfig& cfg) {
  if (!world.is_free(pose.position())) {
    throw InvalidPoseError("camera pose (" + format_double(pose.x()) + ", " + format_double(pose.y()) +
                           ") is not in free space");
  }
  const int width = static_cast<int>(cfg.image_width);
  const int height = static_cast<int>(cfg.image_height);
  const double hfov = core::deg_to_rad(cfg.camera_hfov_deg);
  const double focal = (width / 2.0) / std::tan(hfov / 2.0);
  const double horizon = height / 2.0;
  cv::Mat image(height, width, CV_8UC3);
  std::vector<cv::Vec3b> colors;
  colors.reserve(world.segments.size());
  for (const auto& s : world.segments) colors.push_back(palette_color(s.color));

  for (int c = 0; c < width; ++c) {
    const double offset = hfov / 2.0 - (c + 0.5) * hfov / width;
    const auto hit = cast_ray(world, pose.position(), pose.theta() + offset);
    double top = horizon;
    double bottom = horizon;
    cv::Vec3b wall{0, 0, 0};
    if (hit) {
      const double depth = hit->range * std::cos(offset);
      top = horizon - focal * (kWallHeight - kCameraHeight) / depth;
      bottom = horizon + focal * kCameraHeight / depth;
      const bool light_stripe = std::fmod(hit->along, kStripePeriod) < kStripePeriod / 2.0;
      const double shade = (light_stripe ? 1.0 : 0.7) / (1.0 + 0.08 * hit->range);
      const auto base = colors[static_cast<std::size_t>(hit->segment)];
      for (int k = 0; k < 3; ++k) wall[k] = cv::saturate_cast<std::uint8_t>(base[k] * shade);
    }
    for (int r = 0; r < height; ++r) {
      const double y = r + 0.5;
      auto& px = image.at<cv::Vec3b>(r, c);
      if (hit && y >= top && y <= bottom) {
        px = wall;
      } else if (y < horizon) {
        const auto t = static_cast<std::uint8_t>(150 + 80 * (y / horizon));
        px = {t, static_cast<std::uint8_t>(t + 10 > 255 ? 255 : t + 10), 255};
      } else {
        const auto t = static_cast<std::uint8_t>(60 + 60 * ((y - horizon) / horizon));
        px = {t, t, static_cast<std::uint8_t>(t * 0.8)};
      }
    }
  }
  return image;
}

std::vector<Pose2D> generate_trajectory(const World& world, const WorldConfig& cfg,
                                        std::size_t length, Rng& rng) {
  const double step = cfg.trajectory_step;
  const double min_leg = std::max(1.0, 2.0 * step);
  auto pick_waypoint = [&](const Vec2& from) {
    for (int i = 0; i < kMaxAttempts; ++i) {
      const Vec2 p = random_free_point(world, kRobotRadius, rng);
      if (std::hypot(p[0] - from[0], p[1] - from[1]) < min_leg) continue;
      if (line_of_sight(world, from, p, kRobotRadius)) return p;
    }
    throw GenerationError("no reachable waypoint from (" + format_double(from[0]) + ", " +
                          format_double(from[1]) + ")");
  };

  Vec2 pos = random_free_point(world, kRobotRadius, rng);
  double heading = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  Vec2 target = pick_waypoint(pos);
  std::vector<Pose2D> poses;
  poses.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    poses.emplace_back(pos[0], pos[1], heading);
    if (std::hypot(target[0] - pos[0], target[1] - pos[1]) < step) target = pick_waypoint(pos);
    const double dir = std::atan2(target[1] - pos[1], target[0] - pos[0]);
    heading = core::wrap_angle(heading + std::clamp(core::wrap_angle(dir - heading), -kMaxTurn, kMaxTurn));
    pos = {pos[0] + step * std::cos(dir), pos[1] + step * std::sin(dir)};
  }
  return poses;
}

void save_world(const World& world, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "room " << format_double(world.extent_x) << ' ' << format_double(world.extent_y) << '\n';
  for (const auto& b : world.obstacles) {
    out << "box " << format_double(b.x0) << ' ' << format_double(b.y0) << ' ' << format_double(b.x1)
        << ' ' << format_double(b.y1) << '\n';
  }
  write_text(path, out.str());
}

World load_world(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const std::string ctx = path.string();
  if (lines.empty()) throw FormatError(ctx + ": empty world file");
  const auto head = split_ws(lines[0]);
  if (head.size() != 3 || head[0] != "room") throw FormatError(ctx + ": first line must be 'room <x> <y>'");
  World w = World::room(parse_double(head[1], ctx), parse_double(head[2], ctx));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    if (tok.size() != 5 || tok[0] != "box") {
      throw FormatError(ctx + ":" + std::to_string(i + 1) + ": expected 'box <x0> <y0> <x1> <y1>'");
    }
    w.add_obstacle({parse_double(tok[1], ctx), parse_double(tok[2], ctx), parse_double(tok[3], ctx),
                    parse_double(tok[4], ctx)});
  }
  return w;
}

}  // namespace fusionloc::data
