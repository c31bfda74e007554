#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lidarsdf/geometry.hpp"
#include "lidarsdf/sdf.hpp"

namespace lidarsdf {

/// Raw LiDAR points in the sensor frame, each tagged with the sensor that produced it.
struct Scene {
  std::vector<Vec3> points;
  std::vector<Vec3> sensors;
  std::vector<int> sensor_index;

  std::size_t size() const { return points.size(); }
  const Vec3& sensor_of(std::size_t i) const { return sensors[static_cast<std::size_t>(sensor_index[i])]; }

  /// Throws InvalidArgument unless every point is > 1e-6 from a valid sensor.
  void validate() const;
};

/// Sphere around the insertion site plus the near-field range cut.
struct Roi {
  Vec3 center = Vec3::Zero();
  double radius = 7.0;
  double min_range = 15.0;
};

struct RenderedScene {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> mask;       // 1 = moved onto the object surface
  std::vector<std::size_t> active_indices;
  std::size_t moved_count = 0;
};

struct RenderOptions {
  double max_step = 0.1;       // beam sampling step bound (m)
  int bisection_steps = 30;
  double surface_tolerance = 1e-6;
  int threads = 1;
};

/**
 * Indices whose beam segment (sensor -> point) passes within roi.radius of
 * roi.center and whose range exceeds the near-field cut
 * min(roi.min_range, |center - sensor| - radius). The cut never removes a
 * beam that can reach the sphere, so the test stays sound for objects
 * closer than min_range + radius.
 */
std::vector<std::size_t> select_roi(const Scene& scene, const Roi& roi);

/// Closest distance between segment [a, b] and point c.
double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& c);

/// J + 1 evenly spaced samples from origin to endpoint, J = ceil(length / max_step).
std::vector<Vec3> sample_beam(const Beam& beam, double max_step);

struct BeamHit {
  Vec3 surface;
  int entry_index = 0;  // first sample with g < 0
  double residual = 0.0;  // g at the returned surface point
};

/**
 * Sign scan along the sampled beam followed by bisection between the last
 * outside sample and the first inside one. Returns nullopt when every sample
 * has g >= 0 (a sample with g == 0 exactly does not count as inside).
 * Throws ObjectAtSensor when the beam starts inside the object.
 */
std::optional<BeamHit> trace_beam(const Beam& beam, const SdfDecoder& decoder, const LatentCode& z,
                                  const Pose& pose, const RenderOptions& options = {});

/**
 * Moves every occluded active point onto the object's surface. Inactive and
 * unoccluded points are copied unchanged; no points are added or removed.
 * Throws SurfaceNotConverged if bisection cannot reach the tolerance.
 */
RenderedScene render(const Scene& scene, const Roi& roi, const SdfDecoder& decoder, const LatentCode& z,
                     const Pose& pose, const RenderOptions& options = {});

/// True iff no scene point lies deeper than |eps_overlap| inside the object.
bool check_no_overlap(const Scene& scene, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                      double eps_overlap = -0.02);

/// True iff some scene point has |g| < eps_float (surface contact).
bool check_grounded(const Scene& scene, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                    double eps_float = 0.02);

/// True iff at least min_points points were moved onto the object.
bool check_visible(const RenderedScene& rendered, std::size_t min_points = 300);

}  // namespace lidarsdf
