#pragma once

#include <array>
#include <numbers>

namespace fusionloc::core {

using Vec2 = std::array<double, 2>;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Planar pose in the map frame. theta is kept wrapped into (-pi, pi].
class Pose2D {
 public:
  Pose2D() = default;
  Pose2D(double x, double y, double theta);

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }
  Vec2 position() const { return {x_, y_}; }
  /// [cos theta, sin theta]
  Vec2 heading_vec() const;

  /// Maps a point from this pose's body frame into the parent frame.
  Vec2 transform(const Vec2& local) const;

  bool operator==(const Pose2D&) const = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// Unit quaternion [qx, qy, qz, qw]; normalized on construction.
class Quaternion {
 public:
  Quaternion(double qx, double qy, double qz, double qw);

  double qx() const { return qx_; }
  double qy() const { return qy_; }
  double qz() const { return qz_; }
  double qw() const { return qw_; }

 private:
  double qx_, qy_, qz_, qw_;
};

/// Yaw extracted as atan2(2(qx qy + qw qz), 1 - 2(qy^2 + qz^2)), wrapped to (-pi, pi].
double quat_to_yaw(const Quaternion& q);

Vec2 yaw_to_vec(double theta);

/// atan2(v[1], v[0]). Accepts non-unit vectors; throws DegenerateOrientationError
/// when the norm is at or below 1e-8.
double vec_to_yaw(const Vec2& v);

/// Smallest absolute angular difference in degrees, in [0, 180].
double angular_error_deg(double theta_pred, double theta_gt);

double position_error_m(const Vec2& p_pred, const Vec2& p_gt);

constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }
constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace fusionloc::core
