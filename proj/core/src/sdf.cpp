#include "lidarsdf/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

// ---------------------------------------------------------------------------
// SdfDecoder
// ---------------------------------------------------------------------------

void SdfDecoder::check_dim(const LatentCode& z) const {
  if (z.size() != latent_dim()) {
    throw InvalidArgument("latent code has dimension " + std::to_string(z.size()) + ", decoder expects " +
                          std::to_string(latent_dim()));
  }
}

Vec3 SdfDecoder::grad_point(const LatentCode& z, const Vec3& x_obj) const { return evaluate(z, x_obj).grad_point; }

Eigen::VectorXd SdfDecoder::grad_latent(const LatentCode& z, const Vec3& x_obj) const {
  return evaluate(z, x_obj).grad_latent;
}

// ---------------------------------------------------------------------------
// AnalyticFamily
// ---------------------------------------------------------------------------

namespace {

constexpr double kMinExtent = 0.05;
constexpr double kMinExponent = 1.5;
constexpr double kMaxTaper = 0.45;

struct Clamped {
  ShapeParams value;
  std::array<bool, kShapeParamCount> active;  // false where the clamp is binding
};

Clamped clamp_params(const ShapeParams& q) {
  Clamped c;
  for (int i = 0; i < kShapeParamCount; ++i) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    if (i <= kBottom) {
      lo = kMinExtent;
    } else if (i <= kExpVertical) {
      lo = kMinExponent;
    } else {
      hi = kMaxTaper;
    }
    c.value[i] = std::clamp(q[i], lo, hi);
    c.active[i] = q[i] > lo && q[i] < hi;
  }
  return c;
}

// ||(a, b)||_n for a, b >= 0, scaled to avoid overflow.
double pair_norm(double a, double b, double n) {
  const double m = std::max(a, b);
  if (m == 0.0) return 0.0;
  return m * std::pow(std::pow(a / m, n) + std::pow(b / m, n), 1.0 / n);
}

// r^n * ln(r) with the r -> 0 limit.
double xlogx_pow(double r, double n) { return r > 0.0 ? std::pow(r, n) * std::log(r) : 0.0; }

struct Raw {
  double value = 0.0;
  Vec3 d_point = Vec3::Zero();
  ShapeParams d_param{};
  bool smooth = true;
};

Raw analytic_sdf(const ShapeParams& q_in, const Vec3& x, bool anchored, double contact_depth, bool grads) {
  const Clamped cl = clamp_params(q_in);
  const ShapeParams& q = cl.value;

  // Normalised log-sum-exp minimum: exact when all extents agree.
  constexpr double tau = AnalyticFamily::kSmoothMinTemperature;
  const double m = *std::min_element(q.begin(), q.begin() + 6);
  std::array<double, 6> wts{};
  double wsum = 0.0;
  for (int i = 0; i < 6; ++i) {
    wts[i] = std::exp(-(q[i] - m) / tau);
    wsum += wts[i];
  }
  const double s = m - tau * std::log(wsum / 6.0);
  for (auto& w : wts) w /= wsum;

  const double taper = q[kTaperX] + q[kTaperY];
  const double denom = 1.0 + 2.0 * taper * s;
  const double kappa = (1.0 - taper) / denom;
  const double scale = kappa * s;

  const Vec3 center = anchored ? Vec3(0.0, 0.0, q[kBottom] - contact_depth) : Vec3::Zero();
  const Vec3 p = x - center;

  const double th = std::tanh(p.z());
  const double wx = 1.0 - q[kTaperX] * th;
  const double wy = 1.0 - q[kTaperY] * th;
  const int ix = p.x() >= 0.0 ? kFront : kRear;
  const int iy = p.y() >= 0.0 ? kLeft : kRight;
  const int iz = p.z() >= 0.0 ? kTop : kBottom;
  const double ax = q[ix], ay = q[iy], az = q[iz];

  const double ux = p.x() / (ax * wx);
  const double uy = p.y() / (ay * wy);
  const double uz = p.z() / az;
  const double nh = q[kExpHorizontal], nv = q[kExpVertical];

  const double h = pair_norm(std::abs(ux), std::abs(uy), nh);
  const double n = pair_norm(h, std::abs(uz), nv);

  Raw out;
  out.value = scale * (n - 1.0);
  if (!grads) return out;

  double dn_dux = 0.0, dn_duy = 0.0, dn_duz = 0.0, dn_dnh = 0.0, dn_dnv = 0.0;
  if (n > 0.0) {
    const double rh = h / n, rz = std::abs(uz) / n;
    const double dn_dh = std::pow(rh, nv - 1.0);
    dn_duz = std::copysign(std::pow(rz, nv - 1.0), uz) * (uz == 0.0 ? 0.0 : 1.0);
    dn_dnv = (n / nv) * (xlogx_pow(rh, nv) + xlogx_pow(rz, nv));
    if (h > 0.0) {
      const double rx = std::abs(ux) / h, ry = std::abs(uy) / h;
      dn_dux = dn_dh * std::pow(rx, nh - 1.0) * (ux > 0.0 ? 1.0 : (ux < 0.0 ? -1.0 : 0.0));
      dn_duy = dn_dh * std::pow(ry, nh - 1.0) * (uy > 0.0 ? 1.0 : (uy < 0.0 ? -1.0 : 0.0));
      dn_dnh = dn_dh * (h / nh) * (xlogx_pow(rx, nh) + xlogx_pow(ry, nh));
    }
  } else {
    out.smooth = false;
  }

  const double sech2 = 1.0 - th * th;
  const Vec3 dn_dp(dn_dux / (ax * wx), dn_duy / (ay * wy),
                   dn_duz / az + dn_dux * ux * q[kTaperX] * sech2 / wx + dn_duy * uy * q[kTaperY] * sech2 / wy);
  out.d_point = scale * dn_dp;

  ShapeParams dn_dq{};
  dn_dq[ix] += -dn_dux * ux / ax;
  dn_dq[iy] += -dn_duy * uy / ay;
  dn_dq[iz] += -dn_duz * uz / az;
  dn_dq[kExpHorizontal] = dn_dnh;
  dn_dq[kExpVertical] = dn_dnv;
  dn_dq[kTaperX] = dn_dux * ux * th / wx;
  dn_dq[kTaperY] = dn_duy * uy * th / wy;

  const double dkappa_ds = -2.0 * taper * (1.0 - taper) / (denom * denom);
  const double dkappa_dt = -(1.0 + 2.0 * s) / (denom * denom);
  const double dscale_ds = kappa + s * dkappa_ds;

  for (int i = 0; i < kShapeParamCount; ++i) out.d_param[i] = scale * dn_dq[i];
  for (int i = 0; i < 6; ++i) out.d_param[i] += dscale_ds * wts[i] * (n - 1.0);
  out.d_param[kTaperX] += s * dkappa_dt * (n - 1.0);
  out.d_param[kTaperY] += s * dkappa_dt * (n - 1.0);
  if (anchored) {
    // Raising the bottom extent lifts the centre by the same amount.
    out.d_param[kBottom] -= out.d_point.z();
  }
  for (int i = 0; i < kShapeParamCount; ++i) {
    if (!cl.active[i]) out.d_param[i] = 0.0;
  }
  return out;
}

}  // namespace

AnalyticFamily::AnalyticFamily(const ShapeParams& base, ShapeMap map, bool anchored, double contact_depth)
    : base_(base), map_(std::move(map)), anchored_(anchored), contact_depth_(contact_depth) {
  if (map_.cols() < 1) throw InvalidArgument("analytic family needs a latent dimension >= 1");
}

AnalyticFamily AnalyticFamily::unit_sphere(int latent_dim) {
  ShapeParams base{1, 1, 1, 1, 1, 1, 2, 2, 0, 0};
  ShapeMap map = ShapeMap::Zero(kShapeParamCount, latent_dim);
  for (int i = 0; i <= kBottom; ++i) map(i, 0) = 1.0;
  return AnalyticFamily(base, std::move(map), false, 1.0);
}

AnalyticFamily AnalyticFamily::vehicle(int latent_dim, std::uint64_t seed) {
  constexpr int kActive = 12;
  if (latent_dim < kActive) throw InvalidArgument("vehicle family needs latent_dim >= 12");

  // 4.5 m x 1.9 m x 1.4 m body, boxy exponents, slightly narrower roof.
  const ShapeParams base{2.25, 2.25, 0.95, 0.95, 0.7, 0.7, 4.0, 4.0, 0.08, 0.12};
  // Parameter change per unit latent along each natural direction.
  const Eigen::Matrix<double, kShapeParamCount, 1> sensitivity =
      (Eigen::Matrix<double, kShapeParamCount, 1>() << 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 0.5, 0.5).finished();
  // Natural std-dev in parameter units.
  const Eigen::Matrix<double, kShapeParamCount, 1> spread =
      (Eigen::Matrix<double, kShapeParamCount, 1>() << 0.12, 0.12, 0.05, 0.05, 0.08, 0.04, 0.4, 0.4, 0.03, 0.03)
          .finished();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(kActive, kShapeParamCount);
  for (int c = 0; c < kShapeParamCount; ++c)
    for (int r = 0; r < kActive; ++r) gauss(r, c) = normal(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd thin = qr.householderQ() * Eigen::MatrixXd::Identity(kActive, kShapeParamCount);

  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(latent_dim, kShapeParamCount);
  basis.topRows(kActive) = thin;

  ShapeMap map = sensitivity.asDiagonal() * basis.transpose();
  AnalyticFamily family(base, std::move(map), true, base[kBottom]);
  family.set_natural_variation(basis, spread.cwiseQuotient(sensitivity));
  return family;
}

void AnalyticFamily::set_natural_variation(Eigen::MatrixXd basis, Eigen::VectorXd sigma) {
  if (basis.rows() != latent_dim() || basis.cols() != sigma.size()) {
    throw InvalidArgument("natural variation basis does not match the latent dimension");
  }
  natural_basis_ = std::move(basis);
  natural_sigma_ = std::move(sigma);
}

LatentCode AnalyticFamily::sample_natural(std::uint64_t seed) const {
  if (!has_natural_variation()) throw InvalidArgument("family has no natural variation model");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd c(natural_sigma_.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    double v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0);
    c[i] = v * natural_sigma_[i];
  }
  return natural_basis_ * c;
}

std::vector<std::string> AnalyticFamily::family_names() { return {"sedan", "suv", "coupe"}; }

LatentCode AnalyticFamily::named_code(const std::string& name) const {
  if (!has_natural_variation() || natural_basis_.cols() != kShapeParamCount) {
    throw InvalidArgument("named codes need the vehicle family");
  }
  Eigen::Matrix<double, kShapeParamCount, 1> delta = Eigen::Matrix<double, kShapeParamCount, 1>::Zero();
  if (name == "sedan") {
  } else if (name == "suv") {
    delta << -0.1, -0.1, 0.05, 0.05, 0.15, 0.05, 0.5, 0.5, 0.0, -0.02;
  } else if (name == "coupe") {
    delta << 0.05, 0.1, 0.0, 0.0, -0.1, -0.02, -0.3, -0.5, 0.02, 0.04;
  } else {
    throw InvalidArgument("unknown shape family '" + name + "'");
  }
  // Recover the per-direction coefficients from the parameter offsets.
  const Eigen::VectorXd sens = (map_ * natural_basis_).diagonal();
  return natural_basis_ * delta.cwiseQuotient(sens);
}

ShapeParams AnalyticFamily::params(const LatentCode& z) const {
  check_dim(z);
  const Eigen::Matrix<double, kShapeParamCount, 1> q = map_ * z;
  ShapeParams out;
  for (int i = 0; i < kShapeParamCount; ++i) out[i] = base_[i] + q[i];
  return out;
}

double AnalyticFamily::eval(const LatentCode& z, const Vec3& x_obj) const {
  return analytic_sdf(params(z), x_obj, anchored_, contact_depth_, false).value;
}

SdfEvaluation AnalyticFamily::evaluate(const LatentCode& z, const Vec3& x_obj) const {
  const Raw raw = analytic_sdf(params(z), x_obj, anchored_, contact_depth_, true);
  if (!raw.smooth) throw NonDifferentiable("analytic family is not differentiable at its centre");
  SdfEvaluation out;
  out.value = raw.value;
  out.grad_point = raw.d_point;
  const Eigen::Map<const Eigen::Matrix<double, kShapeParamCount, 1>> dq(raw.d_param.data());
  out.grad_latent = map_.transpose() * dq;
  return out;
}

Eigen::VectorXd AnalyticFamily::grad_latent(const LatentCode& z, const Vec3& x_obj) const {
  const Raw raw = analytic_sdf(params(z), x_obj, anchored_, contact_depth_, true);
  // Unanchored shapes keep a finite latent gradient at the centre; anchored
  // ones move the centre with the bottom extent and inherit the kink.
  if (!raw.smooth && anchored_) throw NonDifferentiable("analytic family is not differentiable at its centre");
  const Eigen::Map<const Eigen::Matrix<double, kShapeParamCount, 1>> dq(raw.d_param.data());
  return map_.transpose() * dq;
}

BoundingSphere AnalyticFamily::bounds(const LatentCode& z) const {
  const ShapeParams q = clamp_params(params(z)).value;
  const Vec3 center = anchored_ ? Vec3(0.0, 0.0, q[kBottom] - contact_depth_) : Vec3::Zero();
  // N >= max |u_i| and |w| <= 1 + t, so the shape sits inside this box.
  const Vec3 half(std::max(q[kFront], q[kRear]) * (1.0 + q[kTaperX]),
                  std::max(q[kLeft], q[kRight]) * (1.0 + q[kTaperY]), std::max(q[kTop], q[kBottom]));
  return {center, half.norm()};
}

std::unique_ptr<SdfDecoder> AnalyticFamily::clone() const { return std::make_unique<AnalyticFamily>(*this); }

// ---------------------------------------------------------------------------
// MlpDecoder
// ---------------------------------------------------------------------------

MlpDecoder::MlpDecoder(int latent_dim, Weights weights, double bounding_radius)
    : latent_dim_(latent_dim), weights_(std::move(weights)), bounding_radius_(bounding_radius) {
  const auto h = weights_.b1.size();
  if (weights_.w1.rows() != h || weights_.w1.cols() != latent_dim + 3 || weights_.w2.rows() != h ||
      weights_.w2.cols() != h || weights_.b2.size() != h || weights_.w3.size() != h) {
    throw InvalidArgument("MLP weight shapes are inconsistent");
  }
}

MlpDecoder MlpDecoder::random(int latent_dim, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, double fan_in, double fan_out) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = normal(rng);
  };
  Weights w;
  const int in = latent_dim + 3;
  w.w1.resize(hidden, in);
  fill(w.w1, in, hidden);
  w.w2.resize(hidden, hidden);
  fill(w.w2, hidden, hidden);
  Eigen::MatrixXd w3(hidden, 1);
  fill(w3, hidden, 1);
  w.w3 = w3.col(0);
  std::normal_distribution<double> bias(0.0, 0.1);
  w.b1.resize(hidden);
  w.b2.resize(hidden);
  for (int i = 0; i < hidden; ++i) w.b1[i] = bias(rng);
  for (int i = 0; i < hidden; ++i) w.b2[i] = bias(rng);
  w.b3 = bias(rng);
  return MlpDecoder(latent_dim, std::move(w));
}

namespace {

Eigen::VectorXd mlp_input(const LatentCode& z, const Vec3& x) {
  Eigen::VectorXd in(z.size() + 3);
  in << z, x;
  return in;
}

}  // namespace

double MlpDecoder::eval(const LatentCode& z, const Vec3& x_obj) const {
  check_dim(z);
  const Eigen::VectorXd a1 = (weights_.w1 * mlp_input(z, x_obj) + weights_.b1).array().tanh().matrix();
  const Eigen::VectorXd a2 = (weights_.w2 * a1 + weights_.b2).array().tanh().matrix();
  return weights_.w3.dot(a2) + weights_.b3;
}

SdfEvaluation MlpDecoder::evaluate(const LatentCode& z, const Vec3& x_obj) const {
  check_dim(z);
  const Eigen::VectorXd a1 = (weights_.w1 * mlp_input(z, x_obj) + weights_.b1).array().tanh().matrix();
  const Eigen::VectorXd a2 = (weights_.w2 * a1 + weights_.b2).array().tanh().matrix();

  // Backward pass: tanh' = 1 - tanh^2.
  const Eigen::VectorXd d2 = weights_.w3.cwiseProduct((1.0 - a2.array().square()).matrix());
  const Eigen::VectorXd d1 = (weights_.w2.transpose() * d2).cwiseProduct((1.0 - a1.array().square()).matrix());
  const Eigen::VectorXd d_in = weights_.w1.transpose() * d1;

  SdfEvaluation out;
  out.value = weights_.w3.dot(a2) + weights_.b3;
  out.grad_latent = d_in.head(latent_dim_);
  out.grad_point = d_in.tail<3>();
  return out;
}

void MlpDecoder::fit_output_layer(const SdfDecoder& target, int samples, double half_width, double latent_scale,
                                  std::uint64_t seed) {
  if (target.latent_dim() != latent_dim_) throw InvalidArgument("fit target has a different latent dimension");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-half_width, half_width);
  std::normal_distribution<double> normal(0.0, latent_scale);

  const int h = hidden();
  Eigen::MatrixXd design(samples, h + 1);
  Eigen::VectorXd rhs(samples);
  for (int s = 0; s < samples; ++s) {
    LatentCode z(latent_dim_);
    for (int i = 0; i < latent_dim_; ++i) z[i] = normal(rng);
    const Vec3 x(uniform(rng), uniform(rng), uniform(rng));
    const Eigen::VectorXd a1 = (weights_.w1 * mlp_input(z, x) + weights_.b1).array().tanh().matrix();
    const Eigen::VectorXd a2 = (weights_.w2 * a1 + weights_.b2).array().tanh().matrix();
    design.row(s).head(h) = a2.transpose();
    design(s, h) = 1.0;
    rhs[s] = target.eval(z, x);
  }
  const Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
  weights_.w3 = sol.head(h);
  weights_.b3 = sol[h];
}

BoundingSphere MlpDecoder::bounds(const LatentCode&) const { return {Vec3::Zero(), bounding_radius_}; }

std::unique_ptr<SdfDecoder> MlpDecoder::clone() const { return std::make_unique<MlpDecoder>(*this); }

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

LatentCode PcaSubspace::project(const LatentCode& z) const { return mean + basis * (basis.transpose() * (z - mean)); }

Eigen::VectorXd PcaSubspace::project_direction(const Eigen::VectorXd& v) const {
  return basis * (basis.transpose() * v);
}

Eigen::VectorXd PcaSubspace::coefficients(const LatentCode& z) const { return basis.transpose() * (z - mean); }

LatentCode PcaSubspace::from_coefficients(const Eigen::VectorXd& c) const { return mean + basis * c; }

double PcaSubspace::residual(const LatentCode& z) const { return (z - project(z)).norm(); }

PcaSubspace fit_pca(const std::vector<LatentCode>& samples, int components) {
  if (samples.empty()) throw RankDeficient("no samples");
  const Eigen::Index d = samples.front().size();
  if (components < 1 || components > d) throw InvalidArgument("invalid PCA component count");
  if (static_cast<int>(samples.size()) < components) {
    throw RankDeficient("fewer samples than requested components");
  }

  LatentCode mean = LatentCode::Zero(d);
  for (const auto& s : samples) {
    if (s.size() != d) throw InvalidArgument("PCA samples have mixed dimensions");
    mean += s;
  }
  mean /= static_cast<double>(samples.size());

  Eigen::MatrixXd centered(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) centered.col(static_cast<Eigen::Index>(i)) = samples[i] - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(samples.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues come back ascending.
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double top = values[0];
  if (!(top > 0.0) || values[components - 1] <= 1e-12 * top) {
    throw RankDeficient("fewer than " + std::to_string(components) + " non-degenerate directions");
  }

  PcaSubspace out;
  out.mean = mean;
  out.basis = vectors.leftCols(components);
  out.variances = values.head(components);
  // Deterministic sign: largest-magnitude entry of each direction is positive.
  for (int c = 0; c < components; ++c) {
    Eigen::Index arg;
    out.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, c) < 0.0) out.basis.col(c) *= -1.0;
  }
  return out;
}

}  // namespace lidarsdf
