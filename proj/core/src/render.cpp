#include "lidarsdf/render.hpp"

#include <algorithm>
#include <cmath>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/parallel.hpp"

namespace lidarsdf {

void Scene::validate() const {
  if (points.empty()) throw InvalidArgument("scene has no points");
  if (sensor_index.size() != points.size()) throw InvalidArgument("scene sensor_index size mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int s = sensor_index[i];
    if (s < 0 || static_cast<std::size_t>(s) >= sensors.size()) {
      throw InvalidArgument("point " + std::to_string(i) + " references a missing sensor");
    }
    if (!((points[i] - sensors[static_cast<std::size_t>(s)]).norm() > 1e-6)) {
      throw InvalidArgument("point " + std::to_string(i) + " coincides with its sensor");
    }
  }
}

double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (c - a).norm();
  const double t = std::clamp((c - a).dot(ab) / len2, 0.0, 1.0);
  return (a + t * ab - c).norm();
}

std::vector<std::size_t> select_roi(const Scene& scene, const Roi& roi) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3& s = scene.sensor_of(i);
    const Vec3& x = scene.points[i];
    const double near_cut = std::max(0.0, std::min(roi.min_range, (roi.center - s).norm() - roi.radius));
    if ((x - s).norm() <= near_cut) continue;
    if (segment_point_distance(s, x, roi.center) <= roi.radius) active.push_back(i);
  }
  return active;
}

namespace {

int step_count(double length, double max_step) {
  return std::max(1, static_cast<int>(std::ceil(length / max_step)));
}

Vec3 sample_at(const Beam& beam, int j, int steps) {
  if (j == 0) return beam.origin;
  if (j == steps) return beam.point_at(beam.length);
  return beam.point_at(beam.length * (static_cast<double>(j) / steps));
}

}  // namespace

std::vector<Vec3> sample_beam(const Beam& beam, double max_step) {
  if (!(max_step > 0.0)) throw InvalidArgument("max_step must be positive");
  const int steps = step_count(beam.length, max_step);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) out.push_back(sample_at(beam, j, steps));
  return out;
}

std::optional<BeamHit> trace_beam(const Beam& beam, const SdfDecoder& decoder, const LatentCode& z,
                                  const Pose& pose, const RenderOptions& options) {
  if (!(options.max_step > 0.0)) throw InvalidArgument("max_step must be positive");
  const int steps = step_count(beam.length, options.max_step);
  auto g_at = [&](const Vec3& x) { return decoder.eval(z, to_object_frame(x, pose)); };

  // Samples outside the decoder's bounding sphere are positive; skip them.
  int first = 0, last = steps;
  const BoundingSphere bs = decoder.bounds(z);
  if (std::isfinite(bs.radius)) {
    const Vec3 c = to_sensor_frame(bs.center, pose);
    const double r = bs.radius * (1.0 + 1e-9) + 1e-9;
    const double along = (c - beam.origin).dot(beam.direction);
    const double perp2 = (c - beam.origin).squaredNorm() - along * along;
    if (perp2 >= r * r) return std::nullopt;
    const double half = std::sqrt(r * r - perp2);
    const double dt = beam.length / steps;
    first = std::max(0, static_cast<int>(std::floor((along - half) / dt)));
    last = std::min(steps, static_cast<int>(std::ceil((along + half) / dt)));
    if (first > last) return std::nullopt;
  }

  int entry = -1;
  for (int j = first; j <= last; ++j) {
    if (g_at(sample_at(beam, j, steps)) < 0.0) {
      entry = j;
      break;
    }
  }
  if (entry < 0) return std::nullopt;
  if (entry == 0) throw ObjectAtSensor("beam starts inside the inserted object");

  const double dt = beam.length / steps;
  double lo = dt * (entry - 1);
  double hi = entry == steps ? beam.length : dt * entry;
  double g_lo = g_at(beam.point_at(lo));
  double g_hi = g_at(beam.point_at(hi));
  for (int it = 0; it < options.bisection_steps; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g_mid = g_at(beam.point_at(mid));
    if (g_mid < 0.0) {
      hi = mid;
      g_hi = g_mid;
    } else {
      lo = mid;
      g_lo = g_mid;
    }
  }
  const bool take_lo = std::abs(g_lo) <= std::abs(g_hi);
  BeamHit hit;
  hit.surface = beam.point_at(take_lo ? lo : hi);
  hit.residual = take_lo ? g_lo : g_hi;
  hit.entry_index = entry;
  return hit;
}

RenderedScene render(const Scene& scene, const Roi& roi, const SdfDecoder& decoder, const LatentCode& z,
                     const Pose& pose, const RenderOptions& options) {
  RenderedScene out;
  out.points = scene.points;
  out.mask.assign(scene.size(), 0);
  out.active_indices = select_roi(scene, roi);

  std::vector<std::optional<BeamHit>> hits(out.active_indices.size());
  parallel_for(out.active_indices.size(), options.threads, [&](std::size_t k) {
    const std::size_t i = out.active_indices[k];
    hits[k] = trace_beam(beam_from_point(scene.sensor_of(i), scene.points[i]), decoder, z, pose, options);
  });

  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (!hits[k]) continue;
    if (!(std::abs(hits[k]->residual) < options.surface_tolerance)) {
      throw SurfaceNotConverged("bisection ended with |g| = " + std::to_string(std::abs(hits[k]->residual)));
    }
    const std::size_t i = out.active_indices[k];
    out.points[i] = hits[k]->surface;
    out.mask[i] = 1;
    ++out.moved_count;
  }
  return out;
}

bool check_no_overlap(const Scene& scene, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                      double eps_overlap) {
  const double threshold = -std::abs(eps_overlap);
  for (const Vec3& x : scene.points) {
    if (decoder.eval(z, to_object_frame(x, pose)) < threshold) return false;
  }
  return true;
}

bool check_grounded(const Scene& scene, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                    double eps_float) {
  for (const Vec3& x : scene.points) {
    if (std::abs(decoder.eval(z, to_object_frame(x, pose))) < eps_float) return true;
  }
  return false;
}

bool check_visible(const RenderedScene& rendered, std::size_t min_points) {
  return rendered.moved_count >= min_points;
}

}  // namespace lidarsdf
