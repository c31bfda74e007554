#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lidarsdf/geometry.hpp"
#include "lidarsdf/object_extent.hpp"
#include "lidarsdf/render.hpp"

namespace lidarsdf {

struct ClutterSphere {
  Vec3 center;
  double radius = 1.0;
};

/// Box with half sizes `half`, turned by `yaw` about +z.
struct ClutterBox {
  Vec3 center;
  Vec3 half = Vec3::Ones();
  double yaw = 0.0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  double extent = 60.0;  // ground is the square |x|, |y| <= extent around the origin
  int azimuth = 360;
  int elevation = 32;
  double elevation_min = -0.17453292519943295;  // -10 deg
  double elevation_max = 0.03490658503988659;   // +2 deg
  double sensor_height = 2.0;
  std::vector<Vec3> sensors;  // empty: one sensor at (0, 0, sensor_height)
  std::vector<ClutterSphere> spheres;
  std::vector<ClutterBox> boxes;
  int random_clutter = 0;  // seeded extra spheres and boxes
  double clutter_min_range = 8.0;
  double clutter_max_range = 45.0;

  void validate() const;
  std::vector<Vec3> sensor_positions() const;
};

/// The spec's explicit clutter plus the seeded random clutter.
void expand_clutter(const SceneSpec& spec, std::vector<ClutterSphere>& spheres, std::vector<ClutterBox>& boxes);

/// Nearest positive hit distance along a unit ray, or +inf.
double ray_sphere(const Vec3& origin, const Vec3& dir, const ClutterSphere& s);
double ray_box(const Vec3& origin, const Vec3& dir, const ClutterBox& b);

/// First hits of a polar ray grid from every sensor; rays that hit nothing are dropped.
Scene generate(const SceneSpec& spec);

struct PlacementOptions {
  double range_min = 15.0;
  double range_max = 30.0;
  double clearance = 0.005;
  double ground_z = 0.0;
};

/// Uniform range and azimuth around the origin, uniform yaw, flat pitch/roll, grounded tz.
Pose sample_placement(const ShapeProbe& probe, const PlacementOptions& options, std::uint64_t seed);

// Scene files: PLY (ascii or binary_little_endian; float64 x, y, z and int32
// sensor_id) or CSV `x,y,z,sensor_id`, plus a `<stem>.sensors.json` sidecar.
enum class SceneFormat { PlyAscii, PlyBinary, Csv };

std::filesystem::path sensors_sidecar_path(const std::filesystem::path& scene_path);
void save_scene(const std::filesystem::path& path, const Scene& scene, SceneFormat format);
/// Format chosen by extension (.csv or .ply).
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

std::string scene_to_ply(const Scene& scene, bool binary);
std::string scene_to_csv(const Scene& scene);
/// Points and sensor ids only; sensors are left empty.
Scene scene_from_ply(const std::string& bytes);
Scene scene_from_csv(const std::string& text);
std::string sensors_to_json(const std::vector<Vec3>& sensors);
std::vector<Vec3> sensors_from_json(const std::string& text);

}  // namespace lidarsdf
