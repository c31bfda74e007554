#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lidarsdf/geometry.hpp"

namespace lidarsdf {

/// Latent shape vector z driving a decoder.
using LatentCode = Eigen::VectorXd;

/// Value of g(z, x) together with its exact partial derivatives.
struct SdfEvaluation {
  double value = 0.0;
  Vec3 grad_point = Vec3::Zero();
  Eigen::VectorXd grad_latent;
};

/// Object-frame sphere outside of which g(z, .) > 0.
struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = std::numeric_limits<double>::infinity();
};

/**
 * Latent-conditioned signed distance function g(z, x) in the object frame:
 * negative inside, zero on the surface, positive outside.
 *
 * Implementations are immutable after construction; every method is safe to
 * call concurrently.
 */
class SdfDecoder {
 public:
  virtual ~SdfDecoder() = default;

  virtual std::string kind() const = 0;
  virtual int latent_dim() const = 0;

  virtual double eval(const LatentCode& z, const Vec3& x_obj) const = 0;

  /// Value plus dg/dx and dg/dz. Throws NonDifferentiable where g has no gradient.
  virtual SdfEvaluation evaluate(const LatentCode& z, const Vec3& x_obj) const = 0;

  Vec3 grad_point(const LatentCode& z, const Vec3& x_obj) const;
  virtual Eigen::VectorXd grad_latent(const LatentCode& z, const Vec3& x_obj) const;

  /// A sphere enclosing the zero level set; infinite radius when unknown.
  virtual BoundingSphere bounds(const LatentCode& z) const = 0;

  virtual std::unique_ptr<SdfDecoder> clone() const = 0;

 protected:
  void check_dim(const LatentCode& z) const;
};

/// Superellipsoid parameters driven affinely by z.
enum ShapeParam : int {
  kFront = 0,   // half-extent along +x
  kRear,        // half-extent along -x
  kLeft,        // half-extent along +y
  kRight,       // half-extent along -y
  kTop,         // half-extent along +z
  kBottom,      // half-extent along -z
  kExpHorizontal,
  kExpVertical,
  kTaperX,      // narrowing of the x half-extent towards the top
  kTaperY,
  kShapeParamCount
};

using ShapeParams = std::array<double, kShapeParamCount>;
using ShapeMap = Eigen::Matrix<double, kShapeParamCount, Eigen::Dynamic>;

/**
 * Closed-form shape family.
 *
 * With per-side half-extents a, exponents (h, v) and tapers (tx, ty), a point
 * p relative to the shape centre is scaled to
 *
 *   u = (p_x / (a_x w_x), p_y / (a_y w_y), p_z / a_z),  w_* = 1 - t_* tanh(p_z / 1 m)
 *
 * where a_x picks the front or rear extent by the sign of p_x (likewise for y
 * and z). The nested norm N = || (||(u_x, u_y)||_h, u_z) ||_v is 1 on the
 * surface and
 *
 *   g = kappa * smin(a) * (N - 1),  kappa = (1 - tx - ty) / (1 + 2 (tx + ty) smin(a))
 *
 * with smin the normalised log-sum-exp minimum (temperature 1e-3) over the
 * six extents. kappa keeps |g| below the Euclidean distance to the surface
 * for points with N <= 2 inside the valid box (extents > 0, exponents >= 2,
 * tapers in [0, 0.3]), up to the smooth-minimum slack tau*ln(6)/min(a).
 * Outside the valid box parameters are clamped (extents >= 0.05, exponents
 * >= 1.5, tapers in [0, 0.45]) with zero gradient past the clamp.
 *
 * When anchored, the centre sits at (0, 0, a_bottom - contact_depth) so the
 * lowest surface point stays at z = -contact_depth whatever the shape.
 * The gradient is undefined only at the centre itself.
 */
class AnalyticFamily final : public SdfDecoder {
 public:
  AnalyticFamily(const ShapeParams& base, ShapeMap map, bool anchored, double contact_depth);

  /// z = 0 is the unit sphere at the origin; z[0] adds to the radius.
  static AnalyticFamily unit_sphere(int latent_dim);

  /**
   * Vehicle-like family with latent_dim >= 12: a seeded orthonormal 12-d
   * block drives all ten parameters, remaining dimensions are padding with
   * no influence.
   */
  static AnalyticFamily vehicle(int latent_dim = 16, std::uint64_t seed = 2024);

  std::string kind() const override { return "analytic"; }
  int latent_dim() const override { return static_cast<int>(map_.cols()); }
  double eval(const LatentCode& z, const Vec3& x_obj) const override;
  SdfEvaluation evaluate(const LatentCode& z, const Vec3& x_obj) const override;
  Eigen::VectorXd grad_latent(const LatentCode& z, const Vec3& x_obj) const override;
  BoundingSphere bounds(const LatentCode& z) const override;
  std::unique_ptr<SdfDecoder> clone() const override;

  ShapeParams params(const LatentCode& z) const;
  const ShapeParams& base() const { return base_; }
  const ShapeMap& map() const { return map_; }
  bool anchored() const { return anchored_; }
  double contact_depth() const { return contact_depth_; }

  /// Basis (latent_dim x k) and per-direction std-dev of natural shape variation.
  void set_natural_variation(Eigen::MatrixXd basis, Eigen::VectorXd sigma);
  const Eigen::MatrixXd& natural_basis() const { return natural_basis_; }
  const Eigen::VectorXd& natural_sigma() const { return natural_sigma_; }
  bool has_natural_variation() const { return natural_basis_.cols() > 0; }

  /// Draws z = basis * (sigma .* c), c ~ N(0, I) truncated to |c_i| <= 2.
  LatentCode sample_natural(std::uint64_t seed) const;

  /// Named baseline shapes of the vehicle family: "sedan", "suv", "coupe".
  LatentCode named_code(const std::string& name) const;
  static std::vector<std::string> family_names();

  static constexpr double kSmoothMinTemperature = 1e-3;

 private:
  ShapeParams base_;
  ShapeMap map_;
  bool anchored_;
  double contact_depth_;
  Eigen::MatrixXd natural_basis_;
  Eigen::VectorXd natural_sigma_;
};

/**
 * Fully connected decoder: input [z; x], two tanh hidden layers, scalar
 * output. Forward and backward passes are written out by hand.
 */
class MlpDecoder final : public SdfDecoder {
 public:
  struct Weights {
    Eigen::MatrixXd w1;  // hidden x (latent_dim + 3)
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // hidden x hidden
    Eigen::VectorXd b2;
    Eigen::VectorXd w3;  // hidden
    double b3 = 0.0;
  };

  MlpDecoder(int latent_dim, Weights weights, double bounding_radius = std::numeric_limits<double>::infinity());

  /// Xavier-style seeded initialisation.
  static MlpDecoder random(int latent_dim, int hidden, std::uint64_t seed);

  /**
   * Keeps the hidden layers and solves the output layer by linear least
   * squares against `target` on points drawn uniformly from a cube of half
   * width `half_width`, with latent codes drawn from N(0, latent_scale^2).
   */
  void fit_output_layer(const SdfDecoder& target, int samples, double half_width, double latent_scale,
                        std::uint64_t seed);

  std::string kind() const override { return "mlp"; }
  int latent_dim() const override { return latent_dim_; }
  double eval(const LatentCode& z, const Vec3& x_obj) const override;
  SdfEvaluation evaluate(const LatentCode& z, const Vec3& x_obj) const override;
  BoundingSphere bounds(const LatentCode& z) const override;
  std::unique_ptr<SdfDecoder> clone() const override;

  const Weights& weights() const { return weights_; }
  Weights& mutable_weights() { return weights_; }
  int hidden() const { return static_cast<int>(weights_.b1.size()); }
  double bounding_radius() const { return bounding_radius_; }

 private:
  int latent_dim_;
  Weights weights_;
  double bounding_radius_;
};

/// Affine PCA subspace of latent codes: mean + span(basis).
struct PcaSubspace {
  LatentCode mean;
  Eigen::MatrixXd basis;        // latent_dim x k, orthonormal columns
  Eigen::VectorXd variances;    // eigenvalues of the retained directions

  int dim() const { return static_cast<int>(basis.cols()); }
  LatentCode project(const LatentCode& z) const;
  Eigen::VectorXd project_direction(const Eigen::VectorXd& v) const;
  Eigen::VectorXd coefficients(const LatentCode& z) const;
  LatentCode from_coefficients(const Eigen::VectorXd& c) const;
  double residual(const LatentCode& z) const;
};

/// Top-`components` principal directions of the samples. Throws RankDeficient.
PcaSubspace fit_pca(const std::vector<LatentCode>& samples, int components = 10);

}  // namespace lidarsdf
