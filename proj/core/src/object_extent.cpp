#include "lidarsdf/object_extent.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

namespace {

constexpr double kFallbackRadius = 5.0;
// The coarse grid grows with the cube of the radius; larger shapes are rejected.
constexpr double kMaxProbeRadius = 12.0;

}  // namespace

ShapeProbe::ShapeProbe(const SdfDecoder& decoder, const LatentCode& z, double resolution)
    : decoder_(decoder), z_(z), resolution_(resolution), coarse_(5.0 * resolution) {
  if (!(resolution > 0.0)) throw InvalidArgument("probe resolution must be positive");
  const BoundingSphere b = decoder.bounds(z);
  const double radius = std::isfinite(b.radius) ? b.radius : kFallbackRadius;
  if (radius > kMaxProbeRadius) throw DegenerateShape("decoded shape exceeds the probe radius");
  const int n = static_cast<int>(std::ceil(radius / coarse_));
  for (int i = -n; i <= n; ++i) {
    for (int j = -n; j <= n; ++j) {
      for (int k = -n; k <= n; ++k) {
        const Vec3 p = b.center + coarse_ * Vec3(i, j, k);
        if ((p - b.center).norm() > radius + coarse_) continue;
        if (decoder.eval(z, p) <= 0.0) interior_.push_back(p);
      }
    }
  }
  if (interior_.empty()) throw DegenerateShape("decoded shape has no interior at the probe resolution");
}

double ShapeProbe::exit_along(const Vec3& start, const Vec3& d) const {
  // March out in coarse/2 steps, then bisect the bracketing interval.
  double lo = 0.0, hi = 0.5 * coarse_;
  int guard = 0;
  while (decoder_.eval(z_, start + hi * d) <= 0.0) {
    lo = hi;
    hi += 0.5 * coarse_;
    if (++guard > 400) break;
  }
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (decoder_.eval(z_, start + mid * d) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double ShapeProbe::support(const Vec3& direction) const {
  const Vec3 d = direction.normalized();

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(interior_.size());
  for (std::size_t i = 0; i < interior_.size(); ++i) scored.emplace_back(d.dot(interior_[i]), i);
  const double top = std::max_element(scored.begin(), scored.end())->first;
  std::erase_if(scored, [&](const auto& s) { return s.first < top - 2.0 * coarse_; });
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (scored.size() > 64) scored.resize(64);

  double best = -std::numeric_limits<double>::infinity();
  Vec3 best_point = Vec3::Zero();
  for (const auto& [score, idx] : scored) {
    const Vec3 p = interior_[idx];
    const double t = exit_along(p, d);
    const double value = d.dot(p) + t;
    if (value > best) {
      best = value;
      best_point = p + t * d;
    }
  }

  // Fine pass: a resolution-spaced patch orthogonal to d around the best exit.
  Vec3 e1 = d.unitOrthogonal();
  Vec3 e2 = d.cross(e1);
  const int half = static_cast<int>(std::round(coarse_ / resolution_));
  for (int a = -half; a <= half; ++a) {
    for (int b = -half; b <= half; ++b) {
      const Vec3 q = best_point + resolution_ * (a * e1 + b * e2) - coarse_ * d;
      if (decoder_.eval(z_, q) > 0.0) continue;
      const double value = d.dot(q) + exit_along(q, d);
      best = std::max(best, value);
    }
  }
  return best;
}

ObjectExtent ShapeProbe::extent() const {
  ObjectExtent e;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 d = Vec3::Zero();
    d[axis] = 1.0;
    e.max[axis] = support(d);
    e.min[axis] = -support(-d);
  }
  return e;
}

double ShapeProbe::grounded_tz(const Pose& pose, double clearance, double ground_z) const {
  // Sensor-frame height of object point p is (R e_z) . p + tz.
  const Vec3 up_in_object = object_rotation(pose) * Vec3::UnitZ();
  return ground_z + clearance + support(-up_in_object);
}

}  // namespace lidarsdf
