#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lidarsdf/adversary.hpp"
#include "lidarsdf/errors.hpp"

namespace lidarsdf {
namespace {

Scene single_point_scene(const Vec3& point, const Vec3& sensor) {
  Scene s;
  s.points = {point};
  s.sensors = {sensor};
  s.sensor_index = {0};
  return s;
}

// ---- project_pose ----

TEST(ProjectPose, InsideLimitsUnchanged) {
  const PoseConstraint c{Pose(20, 5, 0.7, 1.0, 0, 0), 4.0, 0.1, true};
  const Pose p(21, 6, 0.7, 2.0, 0.05, -0.05);
  EXPECT_EQ(project_pose(p, c), p);
}

TEST(ProjectPose, ScalesXyOntoDisc) {
  const PoseConstraint c{Pose(20, 5, 0.7, 1.0, 0, 0), 4.0, 0.1, true};
  const Pose p = project_pose(Pose(26, 13, 0.9, 2.5, 0, 0), c);
  EXPECT_NEAR(p.tx(), 22.4, 1e-12);
  EXPECT_NEAR(p.ty(), 8.2, 1e-12);
  EXPECT_DOUBLE_EQ(p.tz(), 0.9);
  EXPECT_DOUBLE_EQ(p.yaw(), 2.5);
}

TEST(ProjectPose, ClampsPitchAndRoll) {
  const PoseConstraint c{Pose(0, 0, 0, 0, 0.05, 0), 4.0, 0.1, true};
  const Pose p = project_pose(Pose(0, 0, 0, 0, 0.25, -0.3), c);
  EXPECT_NEAR(p.pitch(), 0.15, 1e-15);
  EXPECT_NEAR(p.roll(), -0.1, 1e-15);
}

TEST(ProjectPose, IdempotentAndNonExpanding) {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(-1, 1);
  const Pose c0(15, -3, 0.7, 0.4, 0.02, -0.01);
  const PoseConstraint c{c0, 4.0, 0.1, true};
  for (int i = 0; i < 500; ++i) {
    const Pose p(c0.tx() + 8 * u(rng), c0.ty() + 8 * u(rng), 0.7 + u(rng), 3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
    const Pose q = project_pose(p, c);
    EXPECT_TRUE(satisfies(q, c));
    EXPECT_EQ(project_pose(q, c), q);
    const Vec2 dp(p.tx() - c0.tx(), p.ty() - c0.ty()), dq(q.tx() - c0.tx(), q.ty() - c0.ty());
    EXPECT_LE(dq.norm(), dp.norm() + 1e-12);
    EXPECT_LE(std::abs(q.pitch() - c0.pitch()), std::abs(p.pitch() - c0.pitch()) + 1e-15);
    EXPECT_LE(std::abs(q.roll() - c0.roll()), std::abs(p.roll() - c0.roll()) + 1e-15);
  }
}

// ---- gradients on a single radial beam ----

struct OneBeam : ::testing::Test {
  AnalyticFamily sphere = AnalyticFamily::unit_sphere(3);
  LatentCode z = LatentCode::Zero(3);
  Pose pose{20, 0, 0, 0, 0, 0};
  Scene scene = single_point_scene(Vec3(30, 0, 0), Vec3::Zero());
  Roi roi{Vec3(20, 0, 0), 7.0, 15.0};
};

TEST_F(OneBeam, NoMaskedPointsGiveZero) {
  const Pose away(20, 0, 10, 0, 0, 0);
  const RenderedScene r = render(scene, Roi{away.translation(), 7.0, 15.0}, sphere, z, away);
  ASSERT_EQ(r.moved_count, 0u);
  const std::vector<Vec3> dl(1, Vec3(1, 2, 3));
  EXPECT_EQ(grad_shape(scene, r, sphere, z, away, dl).grad, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(grad_pose(scene, r, sphere, z, away, dl).grad, Vec6::Zero());
}

TEST_F(OneBeam, ShapeGradientByHand) {
  const RenderedScene r = render(scene, roi, sphere, z, pose);
  ASSERT_EQ(r.moved_count, 1u);
  const Vec3 v(0.7, -0.2, 0.4);
  // k = 20 - radius, so dL/dradius = -v.e.
  const Eigen::VectorXd g = grad_shape(scene, r, sphere, z, pose, {v}).grad;
  EXPECT_NEAR(g[0], -0.7, 1e-9);
  EXPECT_NEAR(g[1], 0.0, 1e-12);
  EXPECT_NEAR(g[2], 0.0, 1e-12);
}

TEST_F(OneBeam, PoseGradientByHand) {
  const RenderedScene r = render(scene, roi, sphere, z, pose);
  const Vec3 v(0.7, -0.2, 0.4);
  // Moving the sphere along the beam moves the hit by the same amount; other
  // coordinates leave the radial hit in place to first order.
  const Vec6 g = grad_pose(scene, r, sphere, z, pose, {v}).grad;
  EXPECT_NEAR(g[0], 0.7, 1e-9);
  for (int j = 1; j < 6; ++j) EXPECT_NEAR(g[j], 0.0, 1e-9) << j;
}

TEST_F(OneBeam, SensorMovingWithObjectKeepsRangeFixed) {
  const Vec3 sensor(0, 0.4, 0.1);
  const Scene s = single_point_scene(sensor + 30 * Vec3(1, -0.01, -0.005).normalized(), sensor);
  const RenderedScene r = render(s, roi, sphere, z, pose);
  ASSERT_EQ(r.moved_count, 1u);
  SensorMotion motion;
  motion.ds_dpose = [](std::size_t) {
    Mat36 m = Mat36::Zero();
    m.leftCols<3>() = Mat3::Identity();
    return m;
  };
  const Vec3 v(0.3, -0.5, 0.9);
  const Vec6 g = grad_pose(s, r, sphere, z, pose, {v}, motion).grad;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(g[j], v[j], 1e-9) << j;
}

// Hit point of the beam from s(pose) along e(pose), by bisection.
Vec3 moving_hit(const SdfDecoder& d, const LatentCode& z, const Vec6& p0, const Vec6& dp, const Vec3& s0,
                const Vec3& e0, const Mat36& a, const Mat36& b) {
  const Pose p = Pose::from_vector(p0 + dp);
  const Vec3 s = s0 + a * dp;
  const Vec3 e = (e0 + b * dp).normalized();
  RenderOptions opt;
  opt.bisection_steps = 80;
  opt.surface_tolerance = 1e-12;
  const auto hit = trace_beam(Beam{s, e, 30.0}, d, z, p, opt);
  return hit ? hit->surface : Vec3::Constant(std::nan(""));
}

TEST_F(OneBeam, SensorMotionTermsMatchFiniteDifferences) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n(0.0, 0.2);
  Mat36 a, b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 6; ++j) {
      a(i, j) = n(rng);
      b(i, j) = 0.05 * n(rng);
    }
  const Vec3 s0(0, 0.3, 0.2);
  const Vec3 e0 = Vec3(1, 0.005, -0.02).normalized();
  const Scene s = single_point_scene(s0 + 30 * e0, s0);
  const RenderedScene r = render(s, roi, sphere, z, pose);
  ASSERT_EQ(r.moved_count, 1u);
  SensorMotion motion;
  motion.ds_dpose = [&](std::size_t) { return a; };
  motion.de_dpose = [&](std::size_t) -> Mat36 { return (Mat3::Identity() - e0 * e0.transpose()) * b; };
  const Vec3 v(0.3, -0.5, 0.9);
  const Vec6 g = grad_pose(s, r, sphere, z, pose, {v}, motion).grad;
  const Vec6 p0 = pose.as_vector();
  const double h = 1e-6;
  for (int j = 0; j < 6; ++j) {
    const Vec6 dp = h * Vec6::Unit(j);
    const Vec3 xh = moving_hit(sphere, z, p0, dp, s0, e0, a, b);
    const Vec3 xl = moving_hit(sphere, z, p0, -dp, s0, e0, a, b);
    EXPECT_NEAR(g[j], v.dot(xh - xl) / (2 * h), 1e-5) << j;
  }
}

// ---- attack on a generated scene ----

class AttackFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    family_ = new AnalyticFamily(AnalyticFamily::vehicle());
    z0_ = new LatentCode(family_->named_code("sedan"));
    SceneSpec spec;
    spec.seed = 2;
    spec.random_clutter = 6;
    scene_ = new Scene(generate(spec));
    PlacementSearch search;
    search.clear_radius = 8.0;
    auto p = find_feasible_placement(*scene_, Roi{}, *family_, *z0_, AttackHyper{}, search, 200);
    ASSERT_TRUE(p.has_value());
    placement_ = new Placement(*p);
  }
  static void TearDownTestSuite() {
    delete placement_;
    delete scene_;
    delete z0_;
    delete family_;
  }

  AttackProblem problem() const { return AttackProblem{scene_, Roi{}, family_, &placement_->detector}; }
  static AttackHyper hyper(int n_iter) {
    AttackHyper h;
    h.n_iter = n_iter;
    return h;
  }

  static AnalyticFamily* family_;
  static LatentCode* z0_;
  static Scene* scene_;
  static Placement* placement_;
};

AnalyticFamily* AttackFixture::family_ = nullptr;
LatentCode* AttackFixture::z0_ = nullptr;
Scene* AttackFixture::scene_ = nullptr;
Placement* AttackFixture::placement_ = nullptr;

TEST_F(AttackFixture, ZeroStepKeepsLossConstant) {
  AttackHyper h = hyper(4);
  h.alpha = 0.0;
  const AttackResult r = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, h);
  ASSERT_EQ(r.trace.size(), 5u);
  for (const auto& t : r.trace) EXPECT_EQ(t.loss, r.trace[0].loss);
  EXPECT_EQ(r.best_z, *z0_);
  EXPECT_EQ(r.best_iter, 0);
}

TEST_F(AttackFixture, HugeLambdaStaysAtStart) {
  AttackHyper h = hyper(5);
  h.lambda = 1e6;
  const AttackResult r = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, h);
  EXPECT_LT((r.best_z - *z0_).norm(), 1e-2);
  ASSERT_EQ(r.trace.size(), 6u);
  // The overshooting walk leaves the probe range; those iterates are unevaluated.
  EXPECT_TRUE(std::isinf(r.trace.back().loss));
  EXPECT_FALSE(r.trace.back().feasible.all());
  const AttackResult back = attack_result_from_json(attack_result_to_json(r));
  EXPECT_TRUE(std::isinf(back.trace.back().loss));
}

TEST_F(AttackFixture, InfeasibleStartThrows) {
  const Pose sunk = placement_->pose.with_tz(placement_->pose.tz() - 0.5);
  EXPECT_THROW(attack(AttackMode::Shape, problem(), *z0_, sunk, hyper(2)), InfeasibleStart);
}

TEST_F(AttackFixture, ShapeAttackReducesScoreAndRecordsBestFeasible) {
  const AttackResult r = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, hyper(10));
  EXPECT_EQ(r.iterations, 10);
  ASSERT_EQ(r.trace.size(), 11u);
  EXPECT_LT(r.best_score, r.initial_score);
  double running = r.trace[0].loss;
  for (const auto& t : r.trace) {
    if (t.feasible.all()) running = std::min(running, t.loss);
  }
  EXPECT_EQ(r.best_loss, running);
  EXPECT_TRUE(r.trace[static_cast<std::size_t>(r.best_iter)].feasible.all());
  EXPECT_EQ(r.trace[static_cast<std::size_t>(r.best_iter)].z, r.best_z);
}

TEST_F(AttackFixture, Deterministic) {
  const AttackResult a = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, hyper(3));
  const AttackResult b = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, hyper(3));
  EXPECT_EQ(attack_result_to_json(a), attack_result_to_json(b));
}

TEST_F(AttackFixture, PoseModeRespectsLimits) {
  AttackHyper h = hyper(6);
  h.alpha = 0.5;
  const AttackResult r = attack(AttackMode::Pose, problem(), *z0_, placement_->pose, h);
  PoseConstraint c = h.pose_limits;
  c.center = placement_->pose;
  for (const auto& t : r.trace) {
    if (t.feasible.all()) {
      EXPECT_TRUE(satisfies(t.pose, c));
    }
  }
  EXPECT_TRUE(satisfies(r.best_pose, c));
}

TEST_F(AttackFixture, JsonAndCsvRoundTrip) {
  const AttackResult r = attack(AttackMode::Shape, problem(), *z0_, placement_->pose, hyper(2));
  const std::string json = attack_result_to_json(r);
  EXPECT_EQ(attack_result_to_json(attack_result_from_json(json)), json);
  const std::string csv = trace_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,loss,score,feasible");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

// ---- baselines ----

TEST(RandomBaseline, KeepsRadius) {
  LatentCode z0 = LatentCode::LinSpaced(16, -1, 1);
  LatentCode adv = z0;
  adv[3] += 0.6;
  adv[7] -= 0.8;
  for (std::uint64_t s = 0; s < 1000; ++s) EXPECT_NEAR((random_baseline(z0, adv, s) - z0).norm(), 1.0, 1e-12);
}

TEST(RandomBaseline, MeanIsCentre) {
  const LatentCode z0 = LatentCode::Constant(16, 0.5);
  LatentCode adv = z0;
  adv[0] += 2.0;
  LatentCode mean = LatentCode::Zero(16);
  const int n = 10000;
  for (int s = 0; s < n; ++s) mean += random_baseline(z0, adv, static_cast<std::uint64_t>(s));
  mean /= n;
  // E|mean - z0|^2 = r^2 / n for a uniform draw on the sphere.
  EXPECT_LT((mean - z0).norm(), 3.0 * 2.0 / std::sqrt(n));
}

TEST(RandomBaseline, SeededAndDegenerate) {
  const LatentCode z0 = LatentCode::Zero(8);
  const LatentCode adv = LatentCode::Ones(8);
  EXPECT_EQ(random_baseline(z0, adv, 9), random_baseline(z0, adv, 9));
  EXPECT_NE(random_baseline(z0, adv, 9), random_baseline(z0, adv, 10));
  EXPECT_THROW(random_baseline(z0, z0, 1), DegenerateRadius);
}

TEST(RobustnessNoise, ZeroSigmaCopies) {
  const LatentCode z = LatentCode::LinSpaced(16, 0, 1);
  const auto v = robustness_noise(z, 0.0, 10, 3);
  ASSERT_EQ(v.size(), 10u);
  for (const auto& x : v) EXPECT_EQ(x, z);
}

TEST(RobustnessNoise, NormsConcentrate) {
  const LatentCode z = LatentCode::Zero(16);
  const auto v = robustness_noise(z, 0.01, 4000, 4);
  double mean = 0.0;
  for (const auto& x : v) mean += x.norm();
  mean /= static_cast<double>(v.size());
  EXPECT_NEAR(mean, 0.01 * std::sqrt(16.0), 0.01 * 0.2);
  EXPECT_EQ(robustness_noise(z, 0.01, 5, 4), robustness_noise(z, 0.01, 5, 4));
}

}  // namespace
}  // namespace lidarsdf
