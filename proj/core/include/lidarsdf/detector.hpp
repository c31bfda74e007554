#pragma once

#include <string>
#include <vector>

#include "lidarsdf/geometry.hpp"
#include "lidarsdf/object_extent.hpp"

namespace lidarsdf {

/// Rotated rectangle in the bird's-eye view. length >= width always holds.
class BevBox {
 public:
  BevBox() = default;
  /// Swaps length and width (turning the heading by pi/2) when width > length.
  BevBox(double cx, double cy, double length, double width, double heading);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double length() const { return length_; }
  double width() const { return width_; }
  double heading() const { return heading_; }
  Vec2 center() const { return {cx_, cy_}; }
  double area() const { return length_ * width_; }

  /// Corners in counter-clockwise order.
  std::vector<Vec2> corners() const;

 private:
  double cx_ = 0.0;
  double cy_ = 0.0;
  double length_ = 1.0;
  double width_ = 1.0;
  double heading_ = 0.0;
};

struct Detection {
  BevBox box;
  double score = 0.5;
};

/// Intersection over union of two rotated rectangles.
double iou_bev(const BevBox& a, const BevBox& b);

/// Area of the intersection of two convex CCW polygons (0 for slivers below 1e-12 m^2).
double convex_intersection_area(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

struct DetectorConfig {
  Vec2 origin = Vec2::Zero();  // first anchor centre
  double cell = 2.0;
  int nx = 11;
  int ny = 11;
  int headings = 4;  // evenly spaced over [0, pi)
  double length = 4.5;
  double width = 2.0;
  double gain = 0.15;
  double bias = -3.0;
  double softness = 0.25;
  // Soft height gate sigma((z - gate_height) / gate_softness); gate_softness <= 0 disables it.
  double gate_height = 0.7;
  double gate_softness = 0.3;
  // Points farther than this outside the anchor grid are ignored.
  double crop_margin = 5.0;
};

/**
 * Soft-count BEV scorer. For every anchor box the count
 *   C = sum_i sigma((l - |u_i|) / tau) * sigma((w - |v_i|) / tau) * gate(z_i)
 * (u, v are box-frame coordinates, l, w half extents) gives the score
 * sigma(gain * C + bias), clamped to [1e-7, 1 - 1e-7].
 */
class ToyDetector {
 public:
  explicit ToyDetector(DetectorConfig config);

  /// Grid covering center +/- half_range, snapped to multiples of the cell size.
  static ToyDetector around(const Vec2& center, double half_range = 10.0, DetectorConfig base = {});

  const DetectorConfig& config() const { return config_; }
  const std::vector<BevBox>& anchors() const { return anchors_; }

  std::vector<double> counts(const std::vector<Vec3>& points) const;
  std::vector<Detection> detect(const std::vector<Vec3>& points) const;

  /// dL/dx_i given dL/dp per anchor (same order as anchors()).
  std::vector<Vec3> backward(const std::vector<Vec3>& points, const std::vector<double>& dl_dscore) const;

 private:
  std::vector<std::size_t> cropped_order(const std::vector<Vec3>& points) const;

  DetectorConfig config_;
  std::vector<BevBox> anchors_;
  Vec2 crop_min_;
  Vec2 crop_max_;
};

inline constexpr double kScoreFloor = 1e-7;

struct AdvLoss {
  double value = 0.0;
  std::vector<double> dl_dscore;
  std::vector<double> iou;
};

/// L = sum_i -IoU(gt, y_i) log(1 - p_i); IoU weights are constants in the gradient.
AdvLoss adv_loss(const std::vector<Detection>& detections, const BevBox& gt);

/// L_adv + lambda |z - z0|^2.
double shape_objective(double l_adv, const Eigen::VectorXd& z, const Eigen::VectorXd& z0, double lambda);

/// 2 lambda (z - z0).
Eigen::VectorXd shape_regularizer_gradient(const Eigen::VectorXd& z, const Eigen::VectorXd& z0, double lambda);

/// BEV footprint of an object-frame extent placed at pose (heading = yaw).
BevBox gt_box(const ObjectExtent& extent, const Pose& pose);

/// CSV `cx,cy,length,width,heading,score`.
std::string detections_to_csv(const std::vector<Detection>& detections);

}  // namespace lidarsdf
