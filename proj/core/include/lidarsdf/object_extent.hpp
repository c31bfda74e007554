#pragma once

#include <vector>

#include "lidarsdf/geometry.hpp"
#include "lidarsdf/sdf.hpp"

namespace lidarsdf {

/// Axis-aligned bounds of a zero level set in the object frame.
struct ObjectExtent {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 size() const { return max - min; }
};

/**
 * Dense probe of one decoded shape. A coarse grid (5x the target
 * resolution) records interior samples; support queries refine the extreme
 * candidates on a grid at the target resolution and finish with bisection
 * along the query direction. Throws DegenerateShape when the bounding
 * radius exceeds 12 m or no coarse sample lies inside.
 */
class ShapeProbe {
 public:
  ShapeProbe(const SdfDecoder& decoder, const LatentCode& z, double resolution = 0.02);

  /// max d.p over {p : g(z, p) <= 0} for unit d.
  double support(const Vec3& direction) const;

  ObjectExtent extent() const;

  /// tz that puts the lowest surface point `clearance` above the plane z = ground_z.
  double grounded_tz(const Pose& pose, double clearance, double ground_z = 0.0) const;

  std::size_t interior_samples() const { return interior_.size(); }

 private:
  double exit_along(const Vec3& start, const Vec3& d) const;

  const SdfDecoder& decoder_;
  LatentCode z_;
  double resolution_;
  double coarse_;
  std::vector<Vec3> interior_;
};

}  // namespace lidarsdf
