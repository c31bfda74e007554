#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lidarsdf/geometry.hpp"
#include "lidarsdf/render.hpp"
#include "lidarsdf/sdf.hpp"

namespace lidarsdf {

enum class ReconstructMethod {
  GradientDescent,  // fixed step on the projected gradient
  LevenbergMarquardt,  // damped Gauss-Newton in PCA coordinates; step_size is unused
};

struct ReconstructOptions {
  ReconstructMethod method = ReconstructMethod::GradientDescent;
  int steps = 200;
  double step_size = 0.05;
  // Divide the objective and its gradient by the point count.
  bool mean_objective = false;
  std::optional<LatentCode> start;  // defaults to the PCA mean
};

struct ReconstructResult {
  LatentCode z;
  double objective = 0.0;  // sum over points of g^2 at z
  double initial_objective = 0.0;
  int best_step = 0;
  std::vector<double> trace;  // objective (sum) per step, starting at step 0
};

/// sum_i g(z, T(x_i; pose))^2 and its gradient in z.
double reconstruction_objective(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                                const LatentCode& z, Eigen::VectorXd* grad = nullptr);

/**
 * Minimises the squared-SDF objective inside the affine PCA subspace and
 * returns the best iterate. Gradient descent takes `steps` fixed steps;
 * Levenberg-Marquardt runs at most `steps` iterations and stops once the
 * damping saturates. Throws InvalidArgument for fewer
 * than 10 points and Diverged when the objective exceeds 1e3x its start.
 */
ReconstructResult reconstruct(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                              const PcaSubspace& pca, const ReconstructOptions& options = {});

struct PoolEntry {
  int id = 0;
  LatentCode z;
};

struct RetrievalPool {
  std::vector<PoolEntry> entries;
  PcaSubspace pca;
};

struct Retrieval {
  int id = 0;
  LatentCode z;
  double distance = 0.0;
};

/// Nearest entry by l2 distance (lower id on ties); absent unless distance < |z_query|.
std::optional<Retrieval> retrieve_nearest(const RetrievalPool& pool, const LatentCode& z_query);

/// One {"id": ..., "z": [...]} object per line.
std::string pool_to_jsonl(const RetrievalPool& pool);
std::vector<PoolEntry> pool_entries_from_jsonl(const std::string& text);

/// PCA of `samples` natural codes drawn from the family's variation model.
PcaSubspace fit_family_pca(const AnalyticFamily& family, int samples = 500, std::uint64_t seed = 0,
                           int components = 10);

/// Flat ground seen by four sensors on a ring around the origin.
Scene observation_rig(double ring_radius = 16.0, int azimuth = 360, int elevation = 32);

/// On-object points of the shape (z, pose) rendered into `rig`.
std::vector<Vec3> observe_object(const Scene& rig, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                                 const RenderOptions& options = {});

struct SyntheticObject {
  int id = 0;
  LatentCode z_true;
  Pose pose;
  std::vector<Vec3> points;
};

/// Natural object `id`: seeded code and a grounded pose at the rig centre.
SyntheticObject synthetic_object(const AnalyticFamily& family, const Scene& rig, int id, std::uint64_t seed);

struct PoolBuildOptions {
  int size = 200;
  std::uint64_t seed = 0;
  ReconstructOptions reconstruct;
};

/// Renders, reconstructs and stores `size` synthetic natural objects.
RetrievalPool build_synthetic_pool(const AnalyticFamily& family, const PcaSubspace& pca, const Scene& rig,
                                   const PoolBuildOptions& options, std::vector<SyntheticObject>* objects = nullptr);

}  // namespace lidarsdf
