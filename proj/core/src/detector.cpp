#include "lidarsdf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const std::vector<Vec2>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) twice += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * twice;
}

constexpr double kCollinearEps = 1e-9;
constexpr double kSliverArea = 1e-12;

}  // namespace

BevBox::BevBox(double cx, double cy, double length, double width, double heading)
    : cx_(cx), cy_(cy), length_(length), width_(width), heading_(heading) {
  if (!(length > 0.0) || !(width > 0.0)) throw InvalidArgument("box dimensions must be positive");
  if (width_ > length_) {
    std::swap(length_, width_);
    heading_ += 0.5 * std::numbers::pi;
  }
  heading_ = canonical_angle(heading_);
}

std::vector<Vec2> BevBox::corners() const {
  const Vec2 u(std::cos(heading_), std::sin(heading_));
  const Vec2 v(-u.y(), u.x());
  const Vec2 c = center();
  const double l = 0.5 * length_, w = 0.5 * width_;
  return {c - l * u - w * v, c + l * u - w * v, c + l * u + w * v, c - l * u + w * v};
}

double convex_intersection_area(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<Vec2> poly = a;
  for (std::size_t i = 0; i < b.size() && !poly.empty(); ++i) {
    const Vec2 p0 = b[i];
    const Vec2 edge = b[(i + 1) % b.size()] - p0;
    const double len = edge.norm();
    auto side = [&](const Vec2& q) { return cross2(edge, q - p0) / len; };
    std::vector<Vec2> next;
    for (std::size_t j = 0; j < poly.size(); ++j) {
      const Vec2& cur = poly[j];
      const Vec2& nxt = poly[(j + 1) % poly.size()];
      const double sc = side(cur), sn = side(nxt);
      const bool in_c = sc >= -kCollinearEps, in_n = sn >= -kCollinearEps;
      if (in_c) next.push_back(cur);
      if (in_c != in_n) {
        const double t = sc / (sc - sn);
        next.push_back(cur + t * (nxt - cur));
      }
    }
    poly = std::move(next);
  }
  if (poly.size() < 3) return 0.0;
  const double area = polygon_area(poly);
  return area < kSliverArea ? 0.0 : area;
}

double iou_bev(const BevBox& a, const BevBox& b) {
  const double inter = convex_intersection_area(a.corners(), b.corners());
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

ToyDetector::ToyDetector(DetectorConfig config) : config_(config) {
  if (!(config_.softness > 0.0)) throw InvalidArgument("detector softness must be positive");
  if (config_.nx < 1 || config_.ny < 1 || config_.headings < 1) throw InvalidArgument("detector grid is empty");
  if (!(config_.cell > 0.0)) throw InvalidArgument("detector cell must be positive");
  for (int i = 0; i < config_.nx; ++i) {
    for (int j = 0; j < config_.ny; ++j) {
      for (int k = 0; k < config_.headings; ++k) {
        const double heading = std::numbers::pi * k / config_.headings;
        anchors_.emplace_back(config_.origin.x() + i * config_.cell, config_.origin.y() + j * config_.cell,
                              config_.length, config_.width, heading);
      }
    }
  }
  const Vec2 span((config_.nx - 1) * config_.cell, (config_.ny - 1) * config_.cell);
  crop_min_ = config_.origin - Vec2::Constant(config_.crop_margin);
  crop_max_ = config_.origin + span + Vec2::Constant(config_.crop_margin);
}

ToyDetector ToyDetector::around(const Vec2& center, double half_range, DetectorConfig base) {
  const double cell = base.cell;
  base.origin = Vec2(std::floor((center.x() - half_range) / cell) * cell,
                     std::floor((center.y() - half_range) / cell) * cell);
  const Vec2 top(std::ceil((center.x() + half_range) / cell) * cell,
                 std::ceil((center.y() + half_range) / cell) * cell);
  base.nx = static_cast<int>(std::lround((top.x() - base.origin.x()) / cell)) + 1;
  base.ny = static_cast<int>(std::lround((top.y() - base.origin.y()) / cell)) + 1;
  return ToyDetector(base);
}

std::vector<std::size_t> ToyDetector::cropped_order(const std::vector<Vec3>& points) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (p.x() >= crop_min_.x() && p.x() <= crop_max_.x() && p.y() >= crop_min_.y() && p.y() <= crop_max_.y()) {
      idx.push_back(i);
    }
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const Vec3& p = points[a];
    const Vec3& q = points[b];
    return std::tie(p.x(), p.y(), p.z(), a) < std::tie(q.x(), q.y(), q.z(), b);
  });
  return idx;
}

std::vector<double> ToyDetector::counts(const std::vector<Vec3>& points) const {
  const auto order = cropped_order(points);
  const double tau = config_.softness;
  const double l = 0.5 * config_.length, w = 0.5 * config_.width;
  std::vector<double> gate(order.size(), 1.0);
  if (config_.gate_softness > 0.0) {
    for (std::size_t n = 0; n < order.size(); ++n) {
      gate[n] = sigmoid((points[order[n]].z() - config_.gate_height) / config_.gate_softness);
    }
  }
  std::vector<double> out(anchors_.size(), 0.0);
  for (std::size_t k = 0; k < anchors_.size(); ++k) {
    const BevBox& a = anchors_[k];
    const double c = std::cos(a.heading()), s = std::sin(a.heading());
    double sum = 0.0;
    for (std::size_t n = 0; n < order.size(); ++n) {
      const Vec3& p = points[order[n]];
      const double dx = p.x() - a.cx(), dy = p.y() - a.cy();
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      sum += sigmoid((l - std::abs(u)) / tau) * sigmoid((w - std::abs(v)) / tau) * gate[n];
    }
    out[k] = sum;
  }
  return out;
}

std::vector<Detection> ToyDetector::detect(const std::vector<Vec3>& points) const {
  const auto c = counts(points);
  std::vector<Detection> out(anchors_.size());
  for (std::size_t k = 0; k < anchors_.size(); ++k) {
    out[k].box = anchors_[k];
    out[k].score = std::clamp(sigmoid(config_.gain * c[k] + config_.bias), kScoreFloor, 1.0 - kScoreFloor);
  }
  return out;
}

std::vector<Vec3> ToyDetector::backward(const std::vector<Vec3>& points, const std::vector<double>& dl_dscore) const {
  if (dl_dscore.size() != anchors_.size()) throw InvalidArgument("dL/dp size does not match the anchor count");
  std::vector<Vec3> grads(points.size(), Vec3::Zero());

  const auto c = counts(points);
  std::vector<double> dl_dcount(anchors_.size(), 0.0);
  bool any = false;
  for (std::size_t k = 0; k < anchors_.size(); ++k) {
    if (dl_dscore[k] == 0.0) continue;
    const double p = sigmoid(config_.gain * c[k] + config_.bias);
    if (p <= kScoreFloor || p >= 1.0 - kScoreFloor) continue;  // clamped: zero gradient
    dl_dcount[k] = dl_dscore[k] * config_.gain * p * (1.0 - p);
    any = any || dl_dcount[k] != 0.0;
  }
  if (!any) return grads;

  const auto order = cropped_order(points);
  const double tau = config_.softness;
  const double l = 0.5 * config_.length, w = 0.5 * config_.width;
  const bool gated = config_.gate_softness > 0.0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const Vec3& p = points[order[n]];
    double gate = 1.0, dgate = 0.0;
    if (gated) {
      gate = sigmoid((p.z() - config_.gate_height) / config_.gate_softness);
      dgate = gate * (1.0 - gate) / config_.gate_softness;
    }
    Vec3 g = Vec3::Zero();
    for (std::size_t k = 0; k < anchors_.size(); ++k) {
      if (dl_dcount[k] == 0.0) continue;
      const BevBox& a = anchors_[k];
      const double ch = std::cos(a.heading()), sh = std::sin(a.heading());
      const double dx = p.x() - a.cx(), dy = p.y() - a.cy();
      const double u = ch * dx + sh * dy, v = -sh * dx + ch * dy;
      const double su = sigmoid((l - std::abs(u)) / tau), sv = sigmoid((w - std::abs(v)) / tau);
      const double dsu = -((u > 0.0) - (u < 0.0)) * su * (1.0 - su) / tau;
      const double dsv = -((v > 0.0) - (v < 0.0)) * sv * (1.0 - sv) / tau;
      const double gu = dsu * sv * gate, gv = su * dsv * gate;
      g.x() += dl_dcount[k] * (gu * ch - gv * sh);
      g.y() += dl_dcount[k] * (gu * sh + gv * ch);
      g.z() += dl_dcount[k] * su * sv * dgate;
    }
    grads[order[n]] = g;
  }
  return grads;
}

AdvLoss adv_loss(const std::vector<Detection>& detections, const BevBox& gt) {
  AdvLoss out;
  out.dl_dscore.assign(detections.size(), 0.0);
  out.iou.assign(detections.size(), 0.0);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const double p = detections[i].score;
    if (!(p > 0.0 && p < 1.0)) throw ScoreOutOfRange("detection score outside (0, 1)");
    const double iou = iou_bev(gt, detections[i].box);
    out.iou[i] = iou;
    if (iou == 0.0) continue;
    out.value += -iou * std::log1p(-p);
    out.dl_dscore[i] = iou / (1.0 - p);
  }
  return out;
}

double shape_objective(double l_adv, const Eigen::VectorXd& z, const Eigen::VectorXd& z0, double lambda) {
  if (lambda < 0.0) throw InvalidArgument("lambda must be non-negative");
  return l_adv + lambda * (z - z0).squaredNorm();
}

Eigen::VectorXd shape_regularizer_gradient(const Eigen::VectorXd& z, const Eigen::VectorXd& z0, double lambda) {
  return 2.0 * lambda * (z - z0);
}

BevBox gt_box(const ObjectExtent& extent, const Pose& pose) {
  const Vec3 c = to_sensor_frame(extent.center(), pose);
  const Vec3 size = extent.size();
  return BevBox(c.x(), c.y(), size.x(), size.y(), pose.yaw());
}

std::string detections_to_csv(const std::vector<Detection>& detections) {
  std::ostringstream os;
  os.precision(17);
  os << "cx,cy,length,width,heading,score\n";
  for (const auto& d : detections) {
    os << d.box.cx() << ',' << d.box.cy() << ',' << d.box.length() << ',' << d.box.width() << ','
       << d.box.heading() << ',' << d.score << '\n';
  }
  return os.str();
}

}  // namespace lidarsdf
