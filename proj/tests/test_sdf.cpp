#include <gtest/gtest.h>

#include <random>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/gradcheck.hpp"
#include "lidarsdf/io.hpp"
#include "lidarsdf/object_extent.hpp"
#include "lidarsdf/sdf.hpp"
#include "oracles/oracles.hpp"

namespace lidarsdf {
namespace {

TEST(Sdf, UnitSphereValues) {
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(4);
  const LatentCode z = LatentCode::Zero(4);
  EXPECT_NEAR(sphere.eval(z, Vec3::Zero()), -1.0, 1e-12);
  EXPECT_NEAR(sphere.eval(z, Vec3(1, 0, 0)), 0.0, 1e-12);
  EXPECT_NEAR(sphere.eval(z, Vec3(2, 0, 0)), 1.0, 1e-12);
}

TEST(Sdf, UnitSphereRadialGradient) {
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(4);
  EXPECT_TRUE(sphere.grad_point(LatentCode::Zero(4), Vec3(2, 0, 0)).isApprox(Vec3(1, 0, 0), 1e-9));
}

TEST(Sdf, GradientNormIsOneForSphere) {
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = Vec3(n(rng), n(rng), n(rng)) * 1.7 + Vec3(1e-3, 1e-3, 1e-3);
    EXPECT_NEAR(sphere.grad_point(LatentCode::Zero(3), x).norm(), 1.0, 1e-6);
  }
}

TEST(Sdf, GrowingTheSphereLowersExteriorDistance) {
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(3);
  const Eigen::VectorXd g = sphere.grad_latent(LatentCode::Zero(3), Vec3(0, 2, 0));
  EXPECT_LT(g[0], 0.0);
  EXPECT_NEAR(g[0], -1.0, 1e-9);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(Sdf, VehicleLatentSignOnExtentAxis) {
  // Along +x only the front extent matters; growing it must reduce g outside.
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const LatentCode z = family.named_code("sedan");
  const Vec3 x(4.0, 0.0, 0.0);
  const Eigen::VectorXd dz = family.grad_latent(z, x);
  const Eigen::VectorXd front = family.map().row(kFront).transpose();
  EXPECT_LT(dz.dot(front), 0.0);
}

TEST(Sdf, VehiclePaddingDimensionsHaveZeroGradient) {
  const AnalyticFamily family = AnalyticFamily::vehicle(16);
  const Eigen::VectorXd dz = family.grad_latent(family.named_code("suv"), Vec3(1.0, 2.0, 0.5));
  for (int j = 12; j < 16; ++j) EXPECT_EQ(dz[j], 0.0);
}

TEST(Sdf, VehicleGradientAtCentreIsFinite) {
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const LatentCode z = LatentCode::Zero(16);
  const Vec3 centre(0.0, 0.0, family.params(z)[kBottom] - family.contact_depth());
  try {
    const Vec3 g = family.grad_point(z, centre + Vec3(1e-9, 1e-9, 1e-9));
    EXPECT_TRUE(g.allFinite());
  } catch (const NonDifferentiable&) {
    FAIL() << "perturbed centre must be differentiable";
  }
}

TEST(Sdf, AnalyticGradientsMatchFiniteDifferences) {
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const SuiteReport p = check_grad_point(family, "point", 200, 11, 0.3, 3.0);
  const SuiteReport l = check_grad_latent(family, "latent", 200, 12, 0.3, 3.0);
  EXPECT_TRUE(p.passed()) << p.max_rel_error;
  EXPECT_TRUE(l.passed()) << l.max_rel_error;
}

TEST(Sdf, MlpGradientsMatchFiniteDifferences) {
  const MlpDecoder mlp = MlpDecoder::random(16, 32, 7);
  const SuiteReport p = check_grad_point(mlp, "point", 200, 13, 0.5, 2.0);
  const SuiteReport l = check_grad_latent(mlp, "latent", 200, 14, 0.5, 2.0);
  EXPECT_TRUE(p.passed()) << p.max_rel_error;
  EXPECT_TRUE(l.passed()) << l.max_rel_error;
}

TEST(Sdf, SignMatchesIndependentMembershipTest) {
  const AnalyticFamily family = AnalyticFamily::vehicle();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), uy(-1.5, 1.5), uz(-1.0, 1.2);
  int checked = 0;
  for (const auto& name : AnalyticFamily::family_names()) {
    const LatentCode z = family.named_code(name);
    const ShapeParams q = family.params(z);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 x(ux(rng), uy(rng), uz(rng));
      const double g = family.eval(z, x);
      if (std::abs(g) < 1e-9) continue;
      EXPECT_EQ(g < 0.0, oracle::inside_analytic(q, family.anchored(), family.contact_depth(), x))
          << name << " at " << x.transpose();
      ++checked;
    }
  }
  EXPECT_GT(checked, 2900);
}

TEST(Sdf, AnalyticValueBoundedByDistanceToSurface) {
  // |g| <= distance: the surface point found along any segment is at least |g| away.
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const LatentCode z = family.named_code("sedan");
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const Vec3 x(3.0 * u(rng), 1.3 * u(rng), 0.9 * u(rng));
    const double g = family.eval(z, x);
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    // March until the sign changes; that crossing bounds the distance.
    for (double t = 1e-3; t < 8.0; t += 1e-3) {
      if ((family.eval(z, x + t * d) < 0.0) != (g < 0.0)) {
        EXPECT_LE(std::abs(g), t + 3e-3) << x.transpose();
        break;
      }
    }
  }
}

TEST(Sdf, MlpIsDeterministic) {
  const MlpDecoder a = MlpDecoder::random(16, 32, 9);
  const MlpDecoder b = MlpDecoder::random(16, 32, 9);
  const LatentCode z = LatentCode::Constant(16, 0.1);
  for (int i = 0; i < 10; ++i) {
    const Vec3 x(0.1 * i, -0.2, 0.3);
    EXPECT_EQ(a.eval(z, x), b.eval(z, x));
    EXPECT_EQ(a.eval(z, x), a.evaluate(z, x).value);
  }
}

TEST(Sdf, DecoderJsonRoundTripIsBitExact) {
  MlpDecoder mlp = MlpDecoder::random(16, 24, 3);
  const auto back = decoder_from_json(decoder_to_json(mlp));
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const auto fam_back = decoder_from_json(decoder_to_json(family));
  const LatentCode z = family.named_code("coupe");
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(0.2 * i - 2.0, 0.3, 0.1 * i);
    EXPECT_EQ(back->eval(z, x), mlp.eval(z, x));
    EXPECT_EQ(fam_back->eval(z, x), family.eval(z, x));
  }
  EXPECT_THROW(decoder_from_json("{\"format_version\": \"1\", \"kind\": \"mystery\"}"), FormatError);
}

TEST(Sdf, FitPcaSpansExactSubspace) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd span = Eigen::MatrixXd::NullaryExpr(16, 10, [&] { return n(rng); });
  const LatentCode offset = LatentCode::NullaryExpr(16, [&] { return n(rng); });
  std::vector<LatentCode> samples;
  for (int i = 0; i < 60; ++i) samples.push_back(offset + span * Eigen::VectorXd::NullaryExpr(10, [&] { return n(rng); }));
  const PcaSubspace pca = fit_pca(samples);
  EXPECT_LT((pca.basis.transpose() * pca.basis - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  for (const auto& s : samples) EXPECT_LT(pca.residual(s), 1e-8);
  const Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(16, [&] { return n(rng); });
  EXPECT_LT((pca.project_direction(pca.project_direction(v)) - pca.project_direction(v)).norm(), 1e-10);
}

TEST(Sdf, FitPcaRejectsIdenticalSamples) {
  std::vector<LatentCode> same(20, LatentCode::Constant(16, 0.3));
  EXPECT_THROW(fit_pca(same), RankDeficient);
  std::vector<LatentCode> few(5, LatentCode::Zero(16));
  EXPECT_THROW(fit_pca(few), Error);
}

TEST(Sdf, PcaResidualNonIncreasingInComponents) {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<LatentCode> samples;
  for (int i = 0; i < 80; ++i) samples.push_back(LatentCode::NullaryExpr(16, [&] { return n(rng); }));
  const LatentCode probe = LatentCode::NullaryExpr(16, [&] { return n(rng); });
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 12; ++k) {
    const double r = fit_pca(samples, k).residual(probe);
    EXPECT_LE(r, prev + 1e-12);
    prev = r;
  }
}

TEST(Sdf, ShapeProbeFindsSphereExtent) {
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(2);
  const ShapeProbe probe(sphere, LatentCode::Zero(2));
  const ObjectExtent e = probe.extent();
  EXPECT_NEAR(e.max.x(), 1.0, 1e-6);
  EXPECT_NEAR(e.min.z(), -1.0, 1e-6);
  EXPECT_NEAR(probe.grounded_tz(Pose(0, 0, 0, 0.3, 0, 0), 0.005), 1.005, 1e-6);
}

}  // namespace
}  // namespace lidarsdf
