// Acceptance run: one PASS/FAIL line per criterion A1-A9.
// Usage: lidarsdf_acceptance [A1 A2 ...]  (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "lidarsdf/adversary.hpp"
#include "lidarsdf/errors.hpp"
#include "lidarsdf/eval.hpp"
#include "lidarsdf/gradcheck.hpp"
#include "lidarsdf/io.hpp"
#include "lidarsdf/shapefit.hpp"
#include "oracles/oracles.hpp"

namespace lidarsdf {
namespace {

namespace fs = std::filesystem;

// A1
constexpr int kA1Cases = 20;
constexpr double kA1RelTol = 1e-2;
constexpr double kA1MaxFlipFraction = 0.10;
constexpr double kA1Seconds = 300.0;
// A2
constexpr int kA2Configs = 50;
constexpr double kA2OracleStep = 1e-4;
constexpr double kA2GrazingMargin = 1e-3;
constexpr double kA2PositionTol = 1e-3;
constexpr double kA2SurfaceTol = 1e-6;
constexpr double kA2Seconds = 180.0;
// A3 / A4 / A5
constexpr int kScenes = 20;
constexpr double kA3MinDrop = 0.2;
constexpr double kA3Seconds = 1200.0;
constexpr double kA4Seconds = 1200.0;
constexpr double kA5Sigma = 0.01;
constexpr int kA5Draws = 10;
constexpr double kA5MaxMeanDiff = 0.05;
// A7
constexpr int kA7Pairs = 100;
constexpr int kA7Samples = 4000000;
constexpr double kA7MonteCarloTol = 2e-3;
constexpr double kA7AnalyticTol = 1e-9;
// A8
constexpr int kA8Objects = 20;
constexpr int kA8PoolSize = 200;
constexpr double kA8CodeTol = 0.05;
constexpr double kA8ObjectiveTol = 1e-6;
constexpr int kA8MinRetrieved = 19;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- A1

void a1() {
  const auto t0 = Clock::now();
  const AnalyticFamily family = AnalyticFamily::vehicle();
  double worst_shape = 0.0, worst_pose = 0.0;
  int coords = 0, flipped = 0;
  std::size_t silhouette = 0;
  for (const auto& c : make_end_to_end_cases(family, kA1Cases, 1001)) {
    for (int mode = 0; mode < 2; ++mode) {
      const EndToEndResult r = mode == 0 ? end_to_end_shape(c, family) : end_to_end_pose(c, family);
      silhouette += r.silhouette_beams;
      Eigen::VectorXd an(r.analytic.size()), fd(r.numeric.size());
      Eigen::Index kept = 0;
      for (Eigen::Index j = 0; j < r.analytic.size(); ++j) {
        ++coords;
        if (r.flipped[static_cast<std::size_t>(j)]) {
          ++flipped;
          continue;
        }
        an[kept] = r.analytic[j];
        fd[kept] = r.numeric[j];
        ++kept;
      }
      double& worst = mode == 0 ? worst_shape : worst_pose;
      worst = std::max(worst, relative_error(an.head(kept), fd.head(kept)));
    }
  }
  const double flip_fraction = static_cast<double>(flipped) / coords;
  const double secs = seconds_since(t0);
  report("A1",
         worst_shape <= kA1RelTol && worst_pose <= kA1RelTol && flip_fraction < kA1MaxFlipFraction && secs < kA1Seconds,
         fmt("gradient fidelity: max rel err shape %.2e pose %.2e (tol %.0e), flipped %d/%d = %.1f%% (<%.0f%%), "
             "silhouette beams %zu, %.0f s",
             worst_shape, worst_pose, kA1RelTol, flipped, coords, 100 * flip_fraction, 100 * kA1MaxFlipFraction,
             silhouette, secs));
}

// ---------------------------------------------------------------- A2

void a2() {
  const auto t0 = Clock::now();
  const AnalyticFamily family = AnalyticFamily::vehicle();
  long compared = 0, disagree = 0, grazing = 0, moved = 0, off_surface = 0, far_off = 0, inactive_moved = 0;
  double worst_pos = 0.0;
  for (int k = 0; k < kA2Configs; ++k) {
    SceneSpec spec;
    spec.seed = static_cast<std::uint64_t>(2000 + k);
    spec.random_clutter = 6;
    const Scene scene = generate(spec);
    const LatentCode z = family.sample_natural(3000 + static_cast<std::uint64_t>(k));
    const ShapeProbe probe(family, z);
    const Pose pose = sample_placement(probe, PlacementOptions{}, 4000 + static_cast<std::uint64_t>(k));
    Roi roi;
    roi.center = pose.translation();
    const RenderedScene r = render(scene, roi, family, z, pose);
    std::vector<bool> active(scene.size(), false);
    for (auto i : r.active_indices) active[i] = true;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (!active[i]) {
        if (r.mask[i] || r.points[i] != scene.points[i]) ++inactive_moved;
        continue;
      }
      if (r.mask[i]) {
        ++moved;
        if (std::abs(family.eval(z, to_object_frame(r.points[i], pose))) >= kA2SurfaceTol) ++off_surface;
      }
      const auto ref = oracle::ray_march(scene.sensor_of(i), scene.points[i], family, z, pose, kA2OracleStep);
      if (ref.min_abs_g < kA2GrazingMargin) {
        ++grazing;
        continue;
      }
      ++compared;
      if (static_cast<bool>(r.mask[i]) != ref.hit) {
        ++disagree;
      } else if (ref.hit) {
        const double d = (r.points[i] - ref.surface).norm();
        worst_pos = std::max(worst_pos, d);
        if (d > kA2PositionTol) ++far_off;
      }
    }
  }
  const double secs = seconds_since(t0);
  report("A2",
         disagree == 0 && far_off == 0 && off_surface == 0 && inactive_moved == 0 && compared > 0 && secs < kA2Seconds,
         fmt("render oracle: %ld/%ld classifications agree (%ld grazing skipped), max position err %.2e m (tol %.0e), "
             "%ld/%ld moved points with |g|>=%.0e, %ld inactive beams moved, %.0f s",
             compared - disagree, compared, grazing, worst_pos, kA2PositionTol, off_surface, moved, kA2SurfaceTol,
             inactive_moved, secs));
}

// ---------------------------------------------------------------- A3 / A4 / A5

struct SceneCase {
  Scene scene;
  Placement placement;
};

struct ShapeRun {
  double base = 0.0;
  double adv = 0.0;
  double random = 0.0;
  LatentCode z_adv;
};

std::vector<SceneCase>& scene_cases() {
  static std::vector<SceneCase> cases = [] {
    const AnalyticFamily family = AnalyticFamily::vehicle();
    const LatentCode z0 = family.named_code("sedan");
    PlacementSearch search;
    search.clear_radius = 8.0;
    std::vector<SceneCase> out;
    for (int sc = 0; sc < kScenes; ++sc) {
      SceneSpec spec;
      spec.seed = static_cast<std::uint64_t>(sc);
      spec.random_clutter = 6;
      Scene scene = generate(spec);
      auto p = find_feasible_placement(scene, Roi{}, family, z0, AttackHyper{}, search, 100 * static_cast<std::uint64_t>(sc));
      if (!p) throw Error("no feasible placement for scene " + std::to_string(sc));
      out.push_back({std::move(scene), *p});
    }
    return out;
  }();
  return cases;
}

TrialOutcome as_outcome(double score) {
  TrialOutcome o;
  o.matched = score > 0.0;
  o.score = score;
  return o;
}

double auc_of(const std::vector<double>& scores) {
  std::vector<TrialOutcome> v;
  for (double s : scores) v.push_back(as_outcome(s));
  return auc(threshold_recall(v));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<ShapeRun>& shape_runs() {
  static std::vector<ShapeRun> runs = [] {
    const AnalyticFamily family = AnalyticFamily::vehicle();
    const LatentCode z0 = family.named_code("sedan");
    const AttackHyper hyper;
    std::vector<ShapeRun> out;
    int sc = 0;
    for (auto& c : scene_cases()) {
      const AttackProblem problem{&c.scene, Roi{}, &family, &c.placement.detector};
      const AttackResult r = attack_select_lambda(problem, z0, c.placement.pose, hyper);
      ShapeRun run;
      run.z_adv = r.best_z;
      run.base = evaluate(problem, z0, c.placement.pose, hyper).score;
      run.adv = evaluate(problem, r.best_z, r.best_pose, hyper).score;
      run.random = (r.best_z - z0).norm() > 1e-12
                       ? evaluate(problem, random_baseline(z0, r.best_z, static_cast<std::uint64_t>(sc)), c.placement.pose, hyper).score
                       : run.base;
      out.push_back(run);
      ++sc;
    }
    return out;
  }();
  return runs;
}

void a3() {
  const auto t0 = Clock::now();
  scene_cases();
  const auto& runs = shape_runs();
  std::vector<double> base, adv, rnd;
  for (const auto& r : runs) {
    base.push_back(r.base);
    adv.push_back(r.adv);
    rnd.push_back(r.random);
  }
  const double mb = mean(base), ma = mean(adv);
  const double ab = auc_of(base), aa = auc_of(adv), ar = auc_of(rnd);
  const double secs = seconds_since(t0);
  report("A3", ma < mb - kA3MinDrop && aa < ar && ar < ab && secs < kA3Seconds,
         fmt("shape attack: mean score %.4f -> %.4f (drop %.4f, need > %.1f); AUC adv %.4f < random %.4f < baseline "
             "%.4f; %.0f s",
             mb, ma, mb - ma, kA3MinDrop, aa, ar, ab, secs));
}

void a4() {
  const auto t0 = Clock::now();
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const LatentCode z0 = family.named_code("sedan");
  const AttackHyper hyper;
  const ShapeProbe probe(family, z0, hyper.probe_resolution);
  std::vector<double> base, adv, rnd;
  int violations = 0;
  int sc = 0;
  for (auto& c : scene_cases()) {
    const AttackProblem problem{&c.scene, Roi{}, &family, &c.placement.detector};
    const Pose pose0 = c.placement.pose;
    const AttackResult r = attack(AttackMode::Pose, problem, z0, pose0, hyper);
    PoseConstraint limits = hyper.pose_limits;
    limits.center = pose0;
    const Evaluation ev = evaluate(problem, z0, r.best_pose, hyper);
    if (!satisfies(r.best_pose, limits) || !ev.feasible.all()) ++violations;
    Pose pr = random_pose_baseline(pose0, r.best_pose, static_cast<std::uint64_t>(sc));
    pr = pr.with_tz(probe.grounded_tz(pr, hyper.ground_clearance));
    base.push_back(evaluate(problem, z0, pose0, hyper).score);
    adv.push_back(ev.score);
    rnd.push_back(evaluate(problem, z0, pr, hyper).score);
    ++sc;
  }
  const double ab = auc_of(base), aa = auc_of(adv), ar = auc_of(rnd);
  const double secs = seconds_since(t0);
  report("A4", aa < ar && ar <= ab && violations == 0 && secs < kA4Seconds,
         fmt("pose attack: AUC adv %.4f < random %.4f <= baseline %.4f; %d accepted poses violate limits or realism; "
             "%.0f s",
             aa, ar, ab, violations, secs));
}

void a5() {
  const auto t0 = Clock::now();
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const AttackHyper hyper;
  const auto& runs = shape_runs();
  double total = 0.0;
  int n = 0;
  for (std::size_t sc = 0; sc < runs.size(); ++sc) {
    auto& c = scene_cases()[sc];
    const AttackProblem problem{&c.scene, Roi{}, &family, &c.placement.detector};
    for (const LatentCode& z : robustness_noise(runs[sc].z_adv, kA5Sigma, kA5Draws, 5000 + sc)) {
      total += std::abs(evaluate(problem, z, c.placement.pose, hyper).score - runs[sc].adv);
      ++n;
    }
  }
  const double mad = total / n;
  report("A5", mad < kA5MaxMeanDiff,
         fmt("noise robustness: mean |score change| %.4f over %d draws (need < %.2f), %.0f s", mad, n, kA5MaxMeanDiff,
             seconds_since(t0)));
}

// ---------------------------------------------------------------- A6

Scene points_scene(const std::vector<Vec3>& pts, const Vec3& sensor = Vec3::Zero()) {
  Scene s;
  s.points = pts;
  s.sensors = {sensor};
  s.sensor_index.assign(pts.size(), 0);
  return s;
}

// Sensor-frame point along object-frame direction d from `from` where g equals `target`.
Vec3 point_with_value(const SdfDecoder& dec, const LatentCode& z, const Pose& pose, const Vec3& from, const Vec3& d,
                      double target) {
  double lo = 0.0, hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dec.eval(z, from + mid * d) < target ? lo : hi) = mid;
  }
  return to_sensor_frame(from + lo * d, pose);
}

void a6() {
  int cases = 0, correct = 0;
  std::vector<std::string> wrong;
  auto expect = [&](bool got, bool want, const std::string& name) {
    ++cases;
    if (got == want) {
      ++correct;
    } else {
      wrong.push_back(name);
    }
  };
  const AttackHyper hyper;
  const AnalyticFamily sphere = AnalyticFamily::unit_sphere(2);
  const AnalyticFamily vehicle = AnalyticFamily::vehicle();
  const LatentCode zs = LatentCode::Zero(2);
  const LatentCode zv = vehicle.named_code("sedan");
  const Pose ps(20, 0, 0, 0, 0, 0);
  const Pose pv(18, 6, 0.0, 0.6, 0, 0);
  const Pose pv_grounded = pv.with_tz(ShapeProbe(vehicle, zv).grounded_tz(pv, 0.0));

  // Overlap: points inside the object shallower than 2 cm are tolerated.
  for (double g : {-0.001, -0.01, -0.019}) {
    expect(check_no_overlap(points_scene({point_with_value(sphere, zs, ps, Vec3::Zero(), Vec3::UnitX(), g)}), sphere, zs,
                            ps, hyper.eps_overlap),
           true, fmt("sphere overlap g=%g", g));
    expect(check_no_overlap(points_scene({point_with_value(vehicle, zv, pv_grounded, Vec3::Zero(), Vec3(1, 0.2, 0).normalized(), g)}),
                            vehicle, zv, pv_grounded, hyper.eps_overlap),
           true, fmt("vehicle overlap g=%g", g));
  }
  for (double g : {-0.021, -0.03, -0.5}) {
    expect(check_no_overlap(points_scene({point_with_value(sphere, zs, ps, Vec3::Zero(), Vec3::UnitX(), g)}), sphere, zs,
                            ps, hyper.eps_overlap),
           false, fmt("sphere overlap g=%g", g));
    expect(check_no_overlap(points_scene({point_with_value(vehicle, zv, pv_grounded, Vec3::Zero(), Vec3(1, 0.2, 0).normalized(), g)}),
                            vehicle, zv, pv_grounded, hyper.eps_overlap),
           false, fmt("vehicle overlap g=%g", g));
  }

  // Grounding: some scene point within 2 cm of the surface.
  const Scene ground = generate(SceneSpec{});
  for (double g : {0.0, 0.01, 0.019}) {
    expect(check_grounded(points_scene({point_with_value(sphere, zs, ps, Vec3::Zero(), -Vec3::UnitZ(), g)}), sphere, zs,
                          ps, hyper.eps_float),
           true, fmt("sphere contact g=%g", g));
  }
  for (double g : {0.021, 0.05}) {
    expect(check_grounded(points_scene({point_with_value(sphere, zs, ps, Vec3::Zero(), -Vec3::UnitZ(), g)}), sphere, zs,
                          ps, hyper.eps_float),
           false, fmt("sphere contact g=%g", g));
  }
  for (double lift : {0.0, 0.005, 0.015}) {
    expect(check_grounded(ground, vehicle, zv, pv_grounded.with_tz(pv_grounded.tz() + lift), hyper.eps_float), true,
           fmt("vehicle lifted %g", lift));
  }
  for (double g : {0.019, 0.021, 0.05}) {
    expect(check_grounded(points_scene({point_with_value(vehicle, zv, pv_grounded, Vec3::Zero(), -Vec3::UnitZ(), g)}),
                          vehicle, zv, pv_grounded, hyper.eps_float),
           g < hyper.eps_float, fmt("vehicle contact g=%g", g));
  }
  for (double lift : {0.3}) {
    expect(check_grounded(ground, vehicle, zv, pv_grounded.with_tz(pv_grounded.tz() + lift), hyper.eps_float), false,
           fmt("vehicle lifted %g", lift));
  }

  // Visibility: exactly n rendered beams hit the sphere.
  for (int n : {299, 300, 301}) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * i / n;
      pts.emplace_back(40, 0.5 * std::cos(a), 0.5 * std::sin(a));
    }
    for (int i = 0; i < 50; ++i) pts.emplace_back(40, 5.0, -3.0 + 0.1 * i);  // pass beside the sphere
    const Scene s = points_scene(pts);
    Roi roi;
    roi.center = ps.translation();
    const RenderedScene r = render(s, roi, sphere, zs, ps);
    expect(r.moved_count == static_cast<std::size_t>(n) && check_visible(r, 300), n >= 300,
           fmt("visible with %d points", n));
  }

  std::string detail = fmt("realism suite: %d/%d cases classified correctly", correct, cases);
  for (const auto& w : wrong) detail += "; wrong: " + w;
  report("A6", correct == cases, detail);
}

// ---------------------------------------------------------------- A7

void a7() {
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> c(-2, 2), s(0.5, 5), h(0, 2 * std::numbers::pi);
  double worst = 0.0;
  for (int i = 0; i < kA7Pairs; ++i) {
    const BevBox a(c(rng), c(rng), s(rng), s(rng), h(rng));
    const BevBox b(c(rng), c(rng), s(rng), s(rng), h(rng));
    worst = std::max(worst, std::abs(iou_bev(a, b) - oracle::monte_carlo_iou(a, b, kA7Samples, 8000 + i)));
  }
  const double analytic = std::abs(iou_bev(BevBox(0, 0, 2, 2, 0), BevBox(1, 0, 2, 2, 0)) - 1.0 / 3.0);
  report("A7", worst <= kA7MonteCarloTol && analytic <= kA7AnalyticTol,
         fmt("IoU: max |analytic - Monte Carlo| %.2e over %d pairs (tol %.0e); offset squares err %.1e (tol %.0e)", worst,
             kA7Pairs, kA7MonteCarloTol, analytic, kA7AnalyticTol));
}

// ---------------------------------------------------------------- A8

void a8() {
  const auto t0 = Clock::now();
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const PcaSubspace pca = fit_family_pca(family, 500, 0);
  const Scene rig = observation_rig();
  PoolBuildOptions opt;
  opt.size = kA8PoolSize;
  opt.seed = 8;
  opt.reconstruct.method = ReconstructMethod::LevenbergMarquardt;
  std::vector<SyntheticObject> objects;
  const RetrievalPool pool = build_synthetic_pool(family, pca, rig, opt, &objects);

  int recovered = 0, retrieved = 0;
  double worst_code = 0.0, worst_obj = 0.0;
  const int stride = kA8PoolSize / kA8Objects;
  for (int k = 0; k < kA8Objects; ++k) {
    const SyntheticObject& obj = objects[static_cast<std::size_t>(k * stride)];
    const ReconstructResult r = reconstruct(obj.points, obj.pose, family, pca, opt.reconstruct);
    const double dz = (r.z - obj.z_true).norm();
    worst_code = std::max(worst_code, dz);
    worst_obj = std::max(worst_obj, r.objective);
    if (dz < kA8CodeTol && r.objective < kA8ObjectiveTol) ++recovered;
    const auto hit = retrieve_nearest(pool, obj.z_true);
    if (hit && hit->id == obj.id) ++retrieved;
  }
  report("A8", recovered == kA8Objects && retrieved >= kA8MinRetrieved,
         fmt("reconstruction: %d/%d recovered (max |dz| %.2e < %.2f, max objective %.2e < %.0e); retrieval %d/%d (need "
             ">= %d) from a %d-entry pool; %.0f s",
             recovered, kA8Objects, worst_code, kA8CodeTol, worst_obj, kA8ObjectiveTol, retrieved, kA8Objects,
             kA8MinRetrieved, kA8PoolSize, seconds_since(t0)));
}

// ---------------------------------------------------------------- A9

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  }
  return files;
}

bool pipeline(const fs::path& dir) {
  std::ostringstream out, err;
  const std::string d = dir.string();
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "lidarsdf");
    return cli::run(args, out, err) == 0;
  };
  return run({"gen-scene", "--seed", "3", "--clutter", "6", "--out", d + "/scene.ply"}) &&
         run({"attack", "--scene", d + "/scene.ply", "--out-dir", d + "/shape", "--n-iter", "10", "--seed", "1"}) &&
         run({"attack", "--scene", d + "/scene.ply", "--out-dir", d + "/pose", "--mode", "pose", "--n-iter", "10",
              "--seed", "1"}) &&
         run({"eval", d + "/shape/result.json", d + "/pose/result.json", "--out-dir", d + "/eval"});
}

void a9() {
  const fs::path dir = fs::temp_directory_path() / "lidarsdf_acceptance_a9";
  fs::remove_all(dir);
  const bool ok1 = pipeline(dir);
  const auto first = snapshot(dir);
  fs::remove_all(dir);
  const bool ok2 = pipeline(dir);
  const auto second = snapshot(dir);
  fs::remove_all(dir);
  int differing = 0;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) ++differing;
  }
  report("A9", ok1 && ok2 && first.size() == second.size() && differing == 0 && !first.empty(),
         fmt("determinism: gen-scene -> attack -> eval twice, %zu files, %d differ", first.size(), differing));
}

}  // namespace
}  // namespace lidarsdf

int main(int argc, char** argv) {
  using namespace lidarsdf;
  const std::vector<std::pair<std::string, std::function<void()>>> all{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}};
  std::set<std::string> wanted(argv + 1, argv + argc);
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id.c_str(), false, std::string("error: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
