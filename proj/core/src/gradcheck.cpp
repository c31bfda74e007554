#include "lidarsdf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("gradient size mismatch");
  if (numeric.size() == 0) return 0.0;
  const double scale = numeric.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < numeric.size(); ++j) {
    const double denom = std::max({std::abs(numeric[j]), 1e-2 * scale, 1e-8});
    worst = std::max(worst, std::abs(analytic[j] - numeric[j]) / denom);
  }
  return worst;
}

namespace {

struct Sampler {
  explicit Sampler(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  Eigen::VectorXd normal_vector(int n, double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }
  Vec3 box(double h) { return {uniform(-h, h), uniform(-h, h), uniform(-h, h)}; }
  std::mt19937_64 rng;
};

}  // namespace

SuiteReport check_grad_point(const SdfDecoder& decoder, const std::string& name, int samples, std::uint64_t seed,
                             double latent_scale, double box_half_width) {
  SuiteReport r{name, 0.0, 1e-4, 0, 0};
  Sampler s(seed);
  const double h = 1e-6;
  while (r.samples < samples) {
    const LatentCode z = s.normal_vector(decoder.latent_dim(), latent_scale);
    const Vec3 x = s.box(box_half_width);
    Vec3 analytic;
    try {
      analytic = decoder.grad_point(z, x);
    } catch (const NonDifferentiable&) {
      ++r.skipped;
      continue;
    }
    Eigen::VectorXd numeric(3);
    for (int j = 0; j < 3; ++j) {
      Vec3 xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      numeric[j] = (decoder.eval(z, xp) - decoder.eval(z, xm)) / (2.0 * h);
    }
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
    ++r.samples;
  }
  return r;
}

SuiteReport check_grad_latent(const SdfDecoder& decoder, const std::string& name, int samples, std::uint64_t seed,
                              double latent_scale, double box_half_width) {
  SuiteReport r{name, 0.0, 1e-4, 0, 0};
  Sampler s(seed);
  const double h = 1e-6;
  while (r.samples < samples) {
    const LatentCode z = s.normal_vector(decoder.latent_dim(), latent_scale);
    const Vec3 x = s.box(box_half_width);
    Eigen::VectorXd analytic;
    try {
      analytic = decoder.grad_latent(z, x);
    } catch (const NonDifferentiable&) {
      ++r.skipped;
      continue;
    }
    Eigen::VectorXd numeric(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      LatentCode zp = z, zm = z;
      zp[j] += h;
      zm[j] -= h;
      numeric[j] = (decoder.eval(zp, x) - decoder.eval(zm, x)) / (2.0 * h);
    }
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
    ++r.samples;
  }
  return r;
}

SuiteReport check_pose_jacobian(int samples, std::uint64_t seed) {
  SuiteReport r{"pose_jacobian", 0.0, 1e-5, 0, 0};
  Sampler s(seed);
  const double h = 1e-5;
  for (; r.samples < samples; ++r.samples) {
    const Vec3 x = s.box(30.0);
    const Pose pose(s.uniform(-30, 30), s.uniform(-30, 30), s.uniform(-1, 1), s.uniform(0, 6.28), s.uniform(-0.5, 0.5),
                    s.uniform(-0.5, 0.5));
    const Mat36 jac = pose_jacobian(x, pose);
    for (int j = 0; j < 6; ++j) {
      Vec6 vp = pose.as_vector(), vm = pose.as_vector();
      vp[j] += h;
      vm[j] -= h;
      const Vec3 fd = (to_object_frame(x, Pose::from_vector(vp)) - to_object_frame(x, Pose::from_vector(vm))) / (2.0 * h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(jac.col(j), fd));
    }
  }
  return r;
}

SuiteReport check_detector_backward(int samples, std::uint64_t seed) {
  SuiteReport r{"detector_backward", 0.0, 1e-4, 0, 0};
  Sampler s(seed);
  const double h = 1e-5;
  for (; r.samples < samples; ++r.samples) {
    DetectorConfig cfg;
    cfg.nx = 4;
    cfg.ny = 4;
    cfg.origin = Vec2(s.uniform(-5, 5), s.uniform(-5, 5));
    const ToyDetector det(cfg);
    std::vector<Vec3> points;
    for (int i = 0; i < 60; ++i) {
      points.emplace_back(cfg.origin.x() + s.uniform(-1, 7), cfg.origin.y() + s.uniform(-1, 7), s.uniform(0.0, 1.5));
    }
    std::vector<double> weights(det.anchors().size());
    for (auto& w : weights) w = s.normal();
    auto functional = [&](const std::vector<Vec3>& pts) {
      const auto d = det.detect(pts);
      double v = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k) v += weights[k] * d[k].score;
      return v;
    };
    const auto grads = det.backward(points, weights);
    Eigen::VectorXd analytic(3 * points.size()), numeric(3 * points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (int j = 0; j < 3; ++j) {
        auto pp = points, pm = points;
        pp[i][j] += h;
        pm[i][j] -= h;
        analytic[static_cast<Eigen::Index>(3 * i + j)] = grads[i][j];
        numeric[static_cast<Eigen::Index>(3 * i + j)] = (functional(pp) - functional(pm)) / (2.0 * h);
      }
    }
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
  }
  return r;
}

double end_to_end_loss(const EndToEndCase& c, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                       RenderedScene* rendered) {
  Roi roi = c.roi;
  roi.center = c.pose.translation();
  RenderedScene r = render(c.scene, roi, decoder, z, pose);
  const double loss = adv_loss(c.detector.detect(r.points), c.gt).value;
  if (rendered) *rendered = std::move(r);
  return loss;
}

namespace {

// Masked beams whose incidence |e . n| at the base configuration is below
// kSilhouetteCosine. Their hit slides far under small perturbations.
std::vector<std::uint8_t> near_silhouette(const EndToEndCase& c, const SdfDecoder& decoder, const LatentCode& z,
                                          const Pose& pose, const RenderedScene& base, std::size_t* count) {
  std::vector<std::uint8_t> flags(base.points.size(), 0);
  const Mat3 rt = object_rotation(pose).transpose();
  *count = 0;
  for (std::size_t i = 0; i < base.points.size(); ++i) {
    if (!base.mask[i]) continue;
    const Vec3 e = beam_from_point(c.scene.sensor_of(i), c.scene.points[i]).direction;
    const Vec3 n = rt * decoder.evaluate(z, to_object_frame(base.points[i], pose)).grad_point;
    const double norm = n.norm();
    if (norm == 0.0 || std::abs(e.dot(n)) < kSilhouetteCosine * norm) {
      flags[i] = 1;
      ++*count;
    }
  }
  return flags;
}

double frozen_loss(const EndToEndCase& c, RenderedScene& r, const RenderedScene& base,
                   const std::vector<std::uint8_t>& frozen) {
  for (std::size_t i = 0; i < frozen.size(); ++i)
    if (frozen[i]) r.points[i] = base.points[i];
  return adv_loss(c.detector.detect(r.points), c.gt).value;
}

std::vector<Vec3> point_grads_at(const EndToEndCase& c, const RenderedScene& r, const std::vector<std::uint8_t>& frozen) {
  const AdvLoss loss = adv_loss(c.detector.detect(r.points), c.gt);
  std::vector<Vec3> g = c.detector.backward(r.points, loss.dl_dscore);
  for (std::size_t i = 0; i < frozen.size(); ++i)
    if (frozen[i]) g[i].setZero();
  return g;
}

template <typename Perturb>
EndToEndResult central_differences(const EndToEndCase& c, const SdfDecoder& decoder, int n, double h,
                                   const RenderedScene& base, const std::vector<std::uint8_t>& frozen,
                                   Perturb&& perturb) {
  EndToEndResult out;
  out.numeric = Eigen::VectorXd::Zero(n);
  out.flipped.assign(static_cast<std::size_t>(n), false);
  for (int j = 0; j < n; ++j) {
    RenderedScene rp, rm;
    const auto [zp, pp] = perturb(j, h);
    const auto [zm, pm] = perturb(j, -h);
    end_to_end_loss(c, decoder, zp, pp, &rp);
    end_to_end_loss(c, decoder, zm, pm, &rm);
    out.flipped[static_cast<std::size_t>(j)] = rp.mask != base.mask || rm.mask != base.mask;
    out.numeric[j] = (frozen_loss(c, rp, base, frozen) - frozen_loss(c, rm, base, frozen)) / (2.0 * h);
  }
  return out;
}

}  // namespace

EndToEndResult end_to_end_shape(const EndToEndCase& c, const SdfDecoder& decoder, double h) {
  RenderedScene base;
  end_to_end_loss(c, decoder, c.z, c.pose, &base);
  std::size_t silhouette = 0;
  const auto frozen = near_silhouette(c, decoder, c.z, c.pose, base, &silhouette);
  EndToEndResult out =
      central_differences(c, decoder, static_cast<int>(c.z.size()), h, base, frozen, [&](int j, double step) {
        LatentCode z = c.z;
        z[j] += step;
        return std::pair<LatentCode, Pose>(z, c.pose);
      });
  out.analytic = grad_shape(c.scene, base, decoder, c.z, c.pose, point_grads_at(c, base, frozen)).grad;
  out.silhouette_beams = silhouette;
  return out;
}

EndToEndResult end_to_end_pose(const EndToEndCase& c, const SdfDecoder& decoder, double h) {
  RenderedScene base;
  end_to_end_loss(c, decoder, c.z, c.pose, &base);
  std::size_t silhouette = 0;
  const auto frozen = near_silhouette(c, decoder, c.z, c.pose, base, &silhouette);
  EndToEndResult out = central_differences(c, decoder, 6, h, base, frozen, [&](int j, double step) {
    Vec6 v = c.pose.as_vector();
    v[j] += step;
    return std::pair<LatentCode, Pose>(c.z, Pose::from_vector(v));
  });
  out.analytic = grad_pose(c.scene, base, decoder, c.z, c.pose, point_grads_at(c, base, frozen)).grad;
  out.silhouette_beams = silhouette;
  return out;
}

std::vector<EndToEndCase> make_end_to_end_cases(const AnalyticFamily& family, int count, std::uint64_t seed) {
  std::vector<EndToEndCase> cases;
  AttackHyper hyper;
  PlacementSearch search;
  search.clear_radius = 8.0;
  for (std::uint64_t k = 0; static_cast<int>(cases.size()) < count; ++k) {
    if (k > static_cast<std::uint64_t>(20 * count)) throw InvalidArgument("could not build enough feasible cases");
    SceneSpec spec;
    spec.seed = seed + k;
    spec.random_clutter = 6;
    Scene scene = generate(spec);
    const LatentCode z = family.sample_natural(seed + 7919 * (k + 1));
    const auto placement = find_feasible_placement(scene, Roi{}, family, z, hyper, search, seed + 1000 * k);
    if (!placement) continue;
    const ShapeProbe probe(family, z, hyper.probe_resolution);
    const BevBox gt = gt_box(probe.extent(), placement->pose);
    cases.push_back({std::move(scene), Roi{}, z, placement->pose, placement->detector, gt});
  }
  return cases;
}

SplitGradientDecoder::SplitGradientDecoder(std::unique_ptr<SdfDecoder> reference, std::unique_ptr<SdfDecoder> gradients)
    : reference_(std::move(reference)), gradients_(std::move(gradients)) {
  if (!reference_ || !gradients_ || reference_->latent_dim() != gradients_->latent_dim()) {
    throw InvalidArgument("split decoder needs two decoders of equal latent dimension");
  }
}

SdfEvaluation SplitGradientDecoder::evaluate(const LatentCode& z, const Vec3& x_obj) const {
  SdfEvaluation e = gradients_->evaluate(z, x_obj);
  e.value = reference_->eval(z, x_obj);
  return e;
}

Eigen::VectorXd SplitGradientDecoder::grad_latent(const LatentCode& z, const Vec3& x_obj) const {
  return gradients_->grad_latent(z, x_obj);
}

std::unique_ptr<SdfDecoder> SplitGradientDecoder::clone() const {
  return std::make_unique<SplitGradientDecoder>(reference_->clone(), gradients_->clone());
}

}  // namespace lidarsdf
