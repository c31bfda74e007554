#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lidarsdf/detector.hpp"
#include "lidarsdf/render.hpp"
#include "lidarsdf/scenegen.hpp"

namespace lidarsdf {

inline constexpr double kGrazingThreshold = 1e-4;

struct PoseConstraint {
  Pose center;
  double xy_radius = 4.0;
  double pitch_roll_limit = 0.1;
  bool yaw_free = true;
};

/**
 * Optional sensor-motion terms of the pose gradient. Each callback returns
 * a 3x6 Jacobian for point i; absent callbacks mean the term is zero
 * (static sensor, beams fixed in the sensor frame).
 */
struct SensorMotion {
  std::function<Mat36(std::size_t)> ds_dpose;
  std::function<Mat36(std::size_t)> de_dpose;
};

struct ShapeGradient {
  Eigen::VectorXd grad;
  std::size_t grazing_dropped = 0;
};

struct PoseGradient {
  Vec6 grad = Vec6::Zero();
  std::size_t grazing_dropped = 0;
};

/**
 * dL/dz = -sum_i m_i (e_i . dL/dx_i) (e_i . dg/dx_i)^-1 dg/dz.
 * Masked points whose |e_i . dg/dx_i| < 1e-4 are dropped and counted.
 */
ShapeGradient grad_shape(const Scene& scene, const RenderedScene& rendered, const SdfDecoder& decoder,
                         const LatentCode& z, const Pose& pose, const std::vector<Vec3>& point_grads);

/// Pose counterpart of grad_shape, in (tx, ty, tz, yaw, pitch, roll) order.
PoseGradient grad_pose(const Scene& scene, const RenderedScene& rendered, const SdfDecoder& decoder,
                       const LatentCode& z, const Pose& pose, const std::vector<Vec3>& point_grads,
                       const SensorMotion& motion = {});

/// Scales the xy offset onto the disc, clamps pitch/roll around the centre; yaw and z pass through.
Pose project_pose(const Pose& pose, const PoseConstraint& constraint);

bool satisfies(const Pose& pose, const PoseConstraint& constraint, double tol = 1e-9);

enum class AttackMode { Shape, Pose };

struct AttackHyper {
  int n_iter = 40;
  double alpha = 0.01;
  double lambda = 1.0;
  double eps_overlap = -0.02;
  double eps_float = 0.02;
  std::size_t min_points = 30;
  double ground_clearance = 0.005;
  double probe_resolution = 0.02;
  PoseConstraint pose_limits;  // centre is replaced by the initial pose
  RenderOptions render;
};

struct Feasibility {
  bool no_overlap = false;
  bool grounded = false;
  bool visible = false;
  bool all() const { return no_overlap && grounded && visible; }
};

struct TraceEntry {
  int iter = 0;
  double loss = 0.0;      // L_adv plus the shape regularizer
  double adv_loss = 0.0;
  double score = 0.0;     // best-matching detection, 0 when unmatched
  Feasibility feasible;
  std::size_t moved = 0;
  std::size_t grazing_dropped = 0;
  LatentCode z;
  Pose pose;
};

struct AttackResult {
  AttackMode mode = AttackMode::Shape;
  double lambda = 0.0;
  LatentCode best_z;
  Pose best_pose;
  double best_loss = 0.0;
  double best_adv_loss = 0.0;
  double best_score = 0.0;
  int best_iter = 0;
  double initial_score = 0.0;
  bool no_feasible_step = false;
  int iterations = 0;
  std::vector<TraceEntry> trace;
};

/// Everything an attack needs to evaluate one (z, pose).
struct AttackProblem {
  const Scene* scene = nullptr;
  Roi roi;
  const SdfDecoder* decoder = nullptr;
  const ToyDetector* detector = nullptr;
};

struct Evaluation {
  RenderedScene rendered;
  std::vector<Detection> detections;
  BevBox gt;
  AdvLoss loss;
  double score = 0.0;
  Feasibility feasible;
};

/// Renders, detects and scores one configuration.
Evaluation evaluate(const AttackProblem& problem, const LatentCode& z, const Pose& pose, const AttackHyper& hyper);

/**
 * Projected gradient descent over z (shape mode) or the pose (pose mode).
 * Iteration 0 records the start; each of the n_iter steps is followed by a
 * re-render. Infeasible iterates keep walking but are never recorded as
 * best. Throws InfeasibleStart when the start fails a realism check.
 */
AttackResult attack(AttackMode mode, const AttackProblem& problem, const LatentCode& z0, const Pose& pose0,
                    const AttackHyper& hyper);

/// Runs the shape attack for each lambda; lowest best L_adv wins, ties go to the larger lambda.
AttackResult attack_select_lambda(const AttackProblem& problem, const LatentCode& z0, const Pose& pose0,
                                  AttackHyper hyper, const std::vector<double>& lambdas = {1.0, 10.0});

struct PlacementSearch {
  PlacementOptions placement;
  int attempts = 50;
  // Reject placements with a scene point higher than clear_height within
  // clear_radius (xy) of the object centre; 0 disables the test.
  double clear_radius = 0.0;
  double clear_height = 0.3;
  DetectorConfig detector;
  double detector_half_range = 10.0;
};

struct Placement {
  Pose pose;
  std::uint64_t seed = 0;
  ToyDetector detector;
};

/**
 * Tries seeds seed, seed + 1, ... until a sampled placement passes the
 * clearance test and all three realism checks. The detector grid is centred
 * on the accepted placement.
 */
std::optional<Placement> find_feasible_placement(const Scene& scene, const Roi& roi, const SdfDecoder& decoder,
                                                 const LatentCode& z, const AttackHyper& hyper,
                                                 const PlacementSearch& search, std::uint64_t seed);

/// Uniform draw on the sphere of radius |z_adv - z0| around z0.
LatentCode random_baseline(const LatentCode& z0, const LatentCode& z_adv, std::uint64_t seed);

/// n copies of z_adv plus isotropic Gaussian noise.
std::vector<LatentCode> robustness_noise(const LatentCode& z_adv, double sigma, int n, std::uint64_t seed);

/**
 * Pose with the same per-coordinate offset magnitudes as pose_adv relative
 * to pose0: the xy offset keeps its length in a random direction and each
 * angle offset keeps its size with a random sign. tz is left to the caller.
 */
Pose random_pose_baseline(const Pose& pose0, const Pose& pose_adv, std::uint64_t seed);

std::string attack_result_to_json(const AttackResult& result);
AttackResult attack_result_from_json(const std::string& text);

/// CSV `iter,loss,score,feasible`.
std::string trace_to_csv(const AttackResult& result);

std::string to_string(AttackMode mode);
AttackMode attack_mode_from_string(const std::string& name);

}  // namespace lidarsdf
