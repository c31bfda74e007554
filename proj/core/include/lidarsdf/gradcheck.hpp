#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lidarsdf/adversary.hpp"
#include "lidarsdf/sdf.hpp"

namespace lidarsdf {

/**
 * Per-coordinate relative error |a - f| / max(|f|, 1e-2 * max_j |f_j|, 1e-8).
 * Coordinates two orders below the largest finite difference are measured
 * against that floor instead of their own size.
 */
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

struct SuiteReport {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int samples = 0;
  int skipped = 0;  // silhouette flips or grazing configurations
  bool passed() const { return max_rel_error <= tolerance; }
};

/// Central differences of g in x (h = 1e-6) against grad_point on random (z, x).
SuiteReport check_grad_point(const SdfDecoder& decoder, const std::string& name, int samples, std::uint64_t seed,
                             double latent_scale, double box_half_width);
/// Same for grad_latent.
SuiteReport check_grad_latent(const SdfDecoder& decoder, const std::string& name, int samples, std::uint64_t seed,
                              double latent_scale, double box_half_width);
/// pose_jacobian against central differences (h = 1e-5), tolerance 1e-5.
SuiteReport check_pose_jacobian(int samples, std::uint64_t seed);
/// ToyDetector::backward against central differences (h = 1e-5), tolerance 1e-4.
SuiteReport check_detector_backward(int samples, std::uint64_t seed);

/// One end-to-end configuration: scene, placement and detector.
struct EndToEndCase {
  Scene scene;
  Roi roi;
  LatentCode z;
  Pose pose;
  ToyDetector detector;
  BevBox gt;
};

struct EndToEndResult {
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  std::vector<bool> flipped;  // coordinate perturbation changed some beam's mask
  std::size_t silhouette_beams = 0;
};

/// Incidence cosine below which a masked beam counts as a silhouette beam.
/// Such beams keep their base hit on both sides of the difference and drop
/// out of the analytic gradient.
inline constexpr double kSilhouetteCosine = 0.05;

/// L_adv(z, pose) with the gt box held fixed.
double end_to_end_loss(const EndToEndCase& c, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                       RenderedScene* rendered = nullptr);

/// grad_shape vs re-rendered central differences with step h.
EndToEndResult end_to_end_shape(const EndToEndCase& c, const SdfDecoder& decoder, double h = 1e-4);
/// grad_pose vs re-rendered central differences with step h.
EndToEndResult end_to_end_pose(const EndToEndCase& c, const SdfDecoder& decoder, double h = 1e-4);

/// Builds feasible synthetic configurations with the given decoder (vehicle family codes).
std::vector<EndToEndCase> make_end_to_end_cases(const AnalyticFamily& family, int count, std::uint64_t seed);

/**
 * Decoder whose values come from `reference` and whose gradients come from
 * `gradients`; with a perturbed copy as the second argument this is a
 * deliberately inconsistent decoder used as a negative control.
 */
class SplitGradientDecoder final : public SdfDecoder {
 public:
  SplitGradientDecoder(std::unique_ptr<SdfDecoder> reference, std::unique_ptr<SdfDecoder> gradients);

  std::string kind() const override { return reference_->kind(); }
  int latent_dim() const override { return reference_->latent_dim(); }
  double eval(const LatentCode& z, const Vec3& x_obj) const override { return reference_->eval(z, x_obj); }
  SdfEvaluation evaluate(const LatentCode& z, const Vec3& x_obj) const override;
  Eigen::VectorXd grad_latent(const LatentCode& z, const Vec3& x_obj) const override;
  BoundingSphere bounds(const LatentCode& z) const override { return reference_->bounds(z); }
  std::unique_ptr<SdfDecoder> clone() const override;

 private:
  std::unique_ptr<SdfDecoder> reference_;
  std::unique_ptr<SdfDecoder> gradients_;
};

}  // namespace lidarsdf
