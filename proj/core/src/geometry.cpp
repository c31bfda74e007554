#include "lidarsdf/geometry.hpp"

#include <cmath>
#include <numbers>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Derivatives of the elementary rotations with respect to their angle.
Mat3 drot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0,
       0, -s, -c,
       0, c, -s;
  return m;
}

Mat3 drot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0, c,
       0, 0, 0,
       -c, 0, -s;
  return m;
}

Mat3 drot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0,
       c, -s, 0,
       0, 0, 0;
  return m;
}

}  // namespace

double canonical_angle(double radians) {
  double a = std::fmod(radians, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  // fmod of a tiny negative value can round up to exactly 2*pi.
  if (a >= kTwoPi) a = 0.0;
  return a;
}

Pose::Pose(double tx, double ty, double tz, double yaw, double pitch, double roll)
    : tx_(tx), ty_(ty), tz_(tz), yaw_(canonical_angle(yaw)), pitch_(pitch), roll_(roll) {}

Pose Pose::from_vector(const Vec6& v) { return Pose(v[0], v[1], v[2], v[3], v[4], v[5]); }

Vec6 Pose::as_vector() const {
  Vec6 v;
  v << tx_, ty_, tz_, yaw_, pitch_, roll_;
  return v;
}

Pose Pose::with_translation(const Vec3& t) const {
  return Pose(t.x(), t.y(), t.z(), yaw_, pitch_, roll_);
}

Pose Pose::with_tz(double tz) const { return Pose(tx_, ty_, tz, yaw_, pitch_, roll_); }

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return m;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return m;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return m;
}

Mat3 object_rotation(const Pose& pose) {
  return rot_z(-pose.yaw()) * rot_y(-pose.pitch()) * rot_x(-pose.roll());
}

Vec3 to_object_frame(const Vec3& x, const Pose& pose) {
  return object_rotation(pose) * (x - pose.translation());
}

Vec3 to_sensor_frame(const Vec3& p, const Pose& pose) {
  return object_rotation(pose).transpose() * p + pose.translation();
}

Mat36 pose_jacobian(const Vec3& x, const Pose& pose) {
  const Mat3 rz = rot_z(-pose.yaw());
  const Mat3 ry = rot_y(-pose.pitch());
  const Mat3 rx = rot_x(-pose.roll());
  const Vec3 d = x - pose.translation();

  Mat36 j;
  j.leftCols<3>() = -(rz * ry * rx);
  // The angles enter negated, hence the leading minus signs.
  j.col(3) = -(drot_z(-pose.yaw()) * ry * rx * d);
  j.col(4) = -(rz * drot_y(-pose.pitch()) * rx * d);
  j.col(5) = -(rz * ry * drot_x(-pose.roll()) * d);
  return j;
}

Beam beam_from_point(const Vec3& sensor, const Vec3& point) {
  const Vec3 delta = point - sensor;
  const double k = delta.norm();
  if (!(k >= 1e-9)) {
    throw DegenerateBeam("beam endpoint coincides with its sensor");
  }
  return Beam{sensor, delta / k, k};
}

}  // namespace lidarsdf
