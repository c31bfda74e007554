#pragma once

#include <Eigen/Core>

namespace lidarsdf {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Wraps an angle into [0, 2*pi).
double canonical_angle(double radians);

/**
 * Rigid placement of an object in the sensor frame.
 *
 * Parameter order is (tx, ty, tz, yaw, pitch, roll). Yaw is the object's
 * heading: counter-clockwise about +z, so an object with yaw a has its +x
 * axis pointing along (cos a, sin a) in the sensor frame. Pitch turns about
 * +y and roll about +x, both right-handed.
 *
 * Yaw is wrapped to [0, 2*pi) on construction; pitch and roll are stored as
 * given.
 */
class Pose {
 public:
  Pose() = default;
  Pose(double tx, double ty, double tz, double yaw, double pitch, double roll);

  static Pose from_vector(const Vec6& v);
  Vec6 as_vector() const;

  double tx() const { return tx_; }
  double ty() const { return ty_; }
  double tz() const { return tz_; }
  double yaw() const { return yaw_; }
  double pitch() const { return pitch_; }
  double roll() const { return roll_; }
  Vec3 translation() const { return {tx_, ty_, tz_}; }

  Pose with_translation(const Vec3& t) const;
  Pose with_tz(double tz) const;

  bool operator==(const Pose&) const = default;

 private:
  double tx_ = 0.0;
  double ty_ = 0.0;
  double tz_ = 0.0;
  double yaw_ = 0.0;
  double pitch_ = 0.0;
  double roll_ = 0.0;
};

/// Elementary right-handed rotations (counter-clockwise positive).
Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

/**
 * Sensor-to-object rotation R = Rz(-yaw) * Ry(-pitch) * Rx(-roll).
 *
 * Each factor is the frame rotation by the corresponding angle, composed
 * yaw after pitch after roll. The object-to-sensor rotation is R^T.
 */
Mat3 object_rotation(const Pose& pose);

/// T(x; pose) = R * (x - t).
Vec3 to_object_frame(const Vec3& x, const Pose& pose);

/// Inverse of to_object_frame: R^T * p + t.
Vec3 to_sensor_frame(const Vec3& p, const Pose& pose);

/// Column j is dT(x; pose)/d(pose_j), with pose order (tx, ty, tz, yaw, pitch, roll).
Mat36 pose_jacobian(const Vec3& x, const Pose& pose);

/// A reconstructed LiDAR beam: origin + length * direction is the scene point.
struct Beam {
  Vec3 origin;
  Vec3 direction;
  double length = 0.0;

  Vec3 point_at(double distance) const { return origin + distance * direction; }
};

/// Throws DegenerateBeam when |point - sensor| < 1e-9.
Beam beam_from_point(const Vec3& sensor, const Vec3& point);

}  // namespace lidarsdf
