#include "fusionloc/core/pose.hpp"

#include <cmath>
#include <string>

#include "fusionloc/error.hpp"

namespace fusionloc::core {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidInputError(std::string(what) + " is not finite");
  }
}

}  // namespace

double wrap_angle(double theta) {
  require_finite(theta, "angle");
  if (theta > -kPi && theta <= kPi) return theta;
  double wrapped = std::remainder(theta, kTwoPi);  // [-pi, pi]
  if (wrapped <= -kPi) wrapped += kTwoPi;
  return wrapped;
}

Pose2D::Pose2D(double x, double y, double theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {
  require_finite(x, "pose x");
  require_finite(y, "pose y");
}

Vec2 Pose2D::heading_vec() const { return yaw_to_vec(theta_); }

Vec2 Pose2D::transform(const Vec2& local) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {x_ + c * local[0] - s * local[1], y_ + s * local[0] + c * local[1]};
}

Quaternion::Quaternion(double qx, double qy, double qz, double qw) {
  for (double v : {qx, qy, qz, qw}) require_finite(v, "quaternion component");
  const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
  if (norm == 0.0) throw InvalidInputError("zero quaternion");
  qx_ = qx / norm;
  qy_ = qy / norm;
  qz_ = qz / norm;
  qw_ = qw / norm;
}

double quat_to_yaw(const Quaternion& q) {
  const double num = 2.0 * (q.qx() * q.qy() + q.qw() * q.qz());
  const double den = 1.0 - 2.0 * (q.qy() * q.qy() + q.qz() * q.qz());
  return wrap_angle(std::atan2(num, den));
}

Vec2 yaw_to_vec(double theta) {
  require_finite(theta, "yaw");
  return {std::cos(theta), std::sin(theta)};
}

double vec_to_yaw(const Vec2& v) {
  require_finite(v[0], "orientation x");
  require_finite(v[1], "orientation y");
  if (std::hypot(v[0], v[1]) <= 1e-8) {
    throw DegenerateOrientationError("orientation vector has near-zero norm");
  }
  return wrap_angle(std::atan2(v[1], v[0]));
}

double angular_error_deg(double theta_pred, double theta_gt) {
  require_finite(theta_pred, "predicted angle");
  require_finite(theta_gt, "ground-truth angle");
  const double diff = std::abs(std::remainder(theta_pred - theta_gt, kTwoPi));
  return rad_to_deg(std::min(diff, kPi));
}

double position_error_m(const Vec2& p_pred, const Vec2& p_gt) {
  return std::hypot(p_pred[0] - p_gt[0], p_pred[1] - p_gt[1]);
}

}  // namespace fusionloc::core
