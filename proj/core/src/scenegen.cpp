#include "lidarsdf/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinHit = 1e-6;
}  // namespace

void SceneSpec::validate() const {
  if (azimuth < 1 || elevation < 1) throw InvalidArgument("beam resolutions must be >= 1");
  if (!(extent > 0.0)) throw InvalidArgument("ground extent must be positive");
  if (!(elevation_max >= elevation_min)) throw InvalidArgument("elevation_max must be >= elevation_min");
  if (random_clutter < 0) throw InvalidArgument("random_clutter must be non-negative");
  if (!(clutter_max_range >= clutter_min_range)) throw InvalidArgument("clutter range is empty");
}

std::vector<Vec3> SceneSpec::sensor_positions() const {
  if (!sensors.empty()) return sensors;
  return {Vec3(0.0, 0.0, sensor_height)};
}

void expand_clutter(const SceneSpec& spec, std::vector<ClutterSphere>& spheres, std::vector<ClutterBox>& boxes) {
  spheres = spec.spheres;
  boxes = spec.boxes;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < spec.random_clutter; ++i) {
    const double range = spec.clutter_min_range + (spec.clutter_max_range - spec.clutter_min_range) * unit(rng);
    const double az = 2.0 * std::numbers::pi * unit(rng);
    const Vec2 xy = range * Vec2(std::cos(az), std::sin(az));
    if (unit(rng) < 0.5) {
      const double r = 0.3 + 0.7 * unit(rng);
      spheres.push_back({Vec3(xy.x(), xy.y(), r), r});
    } else {
      const Vec3 half(0.3 + 1.2 * unit(rng), 0.3 + 1.2 * unit(rng), 0.4 + 1.1 * unit(rng));
      boxes.push_back({Vec3(xy.x(), xy.y(), half.z()), half, 2.0 * std::numbers::pi * unit(rng)});
    }
  }
}

double ray_sphere(const Vec3& o, const Vec3& d, const ClutterSphere& s) {
  const Vec3 oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return kInf;
  const double root = std::sqrt(disc);
  const double t0 = -b - root, t1 = -b + root;
  if (t0 > kMinHit) return t0;
  if (t1 > kMinHit) return t1;
  return kInf;
}

double ray_box(const Vec3& o, const Vec3& d, const ClutterBox& b) {
  const Mat3 r = rot_z(-b.yaw);
  const Vec3 lo = r * (o - b.center), ld = r * d;
  double tmin = -kInf, tmax = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ld[a]) < 1e-15) {
      if (std::abs(lo[a]) > b.half[a]) return kInf;
      continue;
    }
    double t0 = (-b.half[a] - lo[a]) / ld[a], t1 = (b.half[a] - lo[a]) / ld[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax) return kInf;
  if (tmin > kMinHit) return tmin;
  if (tmax > kMinHit) return tmax;
  return kInf;
}

Scene generate(const SceneSpec& spec) {
  spec.validate();
  std::vector<ClutterSphere> spheres;
  std::vector<ClutterBox> boxes;
  expand_clutter(spec, spheres, boxes);

  Scene scene;
  scene.sensors = spec.sensor_positions();
  for (std::size_t si = 0; si < scene.sensors.size(); ++si) {
    const Vec3& s = scene.sensors[si];
    for (int ie = 0; ie < spec.elevation; ++ie) {
      const double el = spec.elevation == 1
                            ? spec.elevation_min
                            : spec.elevation_min + (spec.elevation_max - spec.elevation_min) * ie / (spec.elevation - 1);
      for (int ia = 0; ia < spec.azimuth; ++ia) {
        const double az = 2.0 * std::numbers::pi * ia / spec.azimuth;
        const Vec3 d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        double t = kInf;
        if (d.z() < 0.0) {
          const double tg = -s.z() / d.z();
          const Vec3 p = s + tg * d;
          if (tg > kMinHit && std::abs(p.x()) <= spec.extent && std::abs(p.y()) <= spec.extent) t = tg;
        }
        for (const auto& sp : spheres) t = std::min(t, ray_sphere(s, d, sp));
        for (const auto& bx : boxes) t = std::min(t, ray_box(s, d, bx));
        if (!std::isfinite(t)) continue;
        Vec3 p = s + t * d;
        if (d.z() < 0.0 && t == -s.z() / d.z()) p.z() = 0.0;  // exact ground plane
        scene.points.push_back(p);
        scene.sensor_index.push_back(static_cast<int>(si));
      }
    }
  }
  return scene;
}

Pose sample_placement(const ShapeProbe& probe, const PlacementOptions& options, std::uint64_t seed) {
  if (!(options.range_max >= options.range_min) || options.range_min < 0.0) throw InvalidArgument("bad placement range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double range = options.range_min + (options.range_max - options.range_min) * unit(rng);
  const double az = 2.0 * std::numbers::pi * unit(rng);
  const double yaw = 2.0 * std::numbers::pi * unit(rng);
  const Pose flat(range * std::cos(az), range * std::sin(az), 0.0, yaw, 0.0, 0.0);
  return flat.with_tz(probe.grounded_tz(flat, options.clearance, options.ground_z));
}

}  // namespace lidarsdf
