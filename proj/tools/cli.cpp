#include "cli.hpp"

#include <glob.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "lidarsdf/adversary.hpp"
#include "lidarsdf/errors.hpp"
#include "lidarsdf/eval.hpp"
#include "lidarsdf/gradcheck.hpp"
#include "lidarsdf/io.hpp"
#include "lidarsdf/scenegen.hpp"
#include "lidarsdf/shapefit.hpp"

namespace lidarsdf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = 0.017453292519943295;

struct UsageError : Error {
  using Error::Error;
};

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json box_json(const BevBox& b) { return {b.cx(), b.cy(), b.length(), b.width(), b.heading()}; }

void write_json(const fs::path& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

void write_resolved(const CLI::App& app, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "config.resolved.json", resolved_config(app));
}

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

// ---------------------------------------------------------------- shared options

struct DecoderArgs {
  std::string decoder;  // empty: built-in vehicle family
  std::string shape = "sedan";
};

void add_decoder_options(CLI::App* app, DecoderArgs& a) {
  app->add_option("--decoder", a.decoder, "Decoder JSON file (empty: built-in vehicle family)");
  app->add_option("--shape", a.shape, "Initial shape: sedan, suv, coupe or zero");
}

std::unique_ptr<SdfDecoder> load_decoder(const DecoderArgs& a) {
  if (a.decoder.empty()) return std::make_unique<AnalyticFamily>(AnalyticFamily::vehicle());
  return decoder_from_json(read_text_file(a.decoder));
}

LatentCode initial_code(const SdfDecoder& decoder, const std::string& shape) {
  if (shape == "zero") return LatentCode::Zero(decoder.latent_dim());
  const auto* family = dynamic_cast<const AnalyticFamily*>(&decoder);
  if (!family || !family->has_natural_variation()) {
    throw UsageError("--shape " + shape + " needs a vehicle-family decoder; use --shape zero");
  }
  return family->named_code(shape);
}

struct DetectorArgs {
  double cell = 2.0;
  double half_range = 10.0;
  double tau = 0.25;
  double gain = 0.15;
  double bias = -3.0;
  double gate_height = 0.7;
  double gate_softness = 0.3;
};

void add_detector_options(CLI::App* app, DetectorArgs& a) {
  app->add_option("--det-cell", a.cell, "Anchor grid spacing (m)");
  app->add_option("--det-half-range", a.half_range, "Anchor grid half size around the object (m)");
  app->add_option("--det-tau", a.tau, "Soft box edge width (m)");
  app->add_option("--det-gain", a.gain, "Score gain a");
  app->add_option("--det-bias", a.bias, "Score bias b");
  app->add_option("--det-gate-height", a.gate_height, "Height gate centre (m)");
  app->add_option("--det-gate-softness", a.gate_softness, "Height gate width (m); 0 disables");
}

DetectorConfig detector_config(const DetectorArgs& a) {
  DetectorConfig c;
  c.cell = a.cell;
  c.softness = a.tau;
  c.gain = a.gain;
  c.bias = a.bias;
  c.gate_height = a.gate_height;
  c.gate_softness = a.gate_softness;
  return c;
}

Pose pose_from_list(const std::vector<double>& v, const std::string& flag) {
  if (v.size() != 6) throw UsageError(flag + " needs six values: tx ty tz yaw pitch roll");
  return Pose(v[0], v[1], v[2], v[3], v[4], v[5]);
}

// ---------------------------------------------------------------- gen-scene

struct GenSceneArgs {
  std::uint64_t seed = 0;
  std::string out;
  int azimuth = 360;
  int elevation = 32;
  double elevation_min = -10.0;
  double elevation_max = 2.0;
  double sensor_height = 2.0;
  double extent = 60.0;
  int clutter = 6;
  std::vector<double> sensors;
  std::string format = "auto";
};

void setup_gen_scene(CLI::App* app, GenSceneArgs& a) {
  app->add_option("--seed", a.seed, "Scene seed");
  app->add_option("--out", a.out, "Output scene file (.ply or .csv)")->required();
  app->add_option("--azimuth", a.azimuth, "Azimuth rays per sensor")->check(CLI::PositiveNumber);
  app->add_option("--elevation", a.elevation, "Elevation rays per sensor")->check(CLI::PositiveNumber);
  app->add_option("--elevation-min", a.elevation_min, "Lowest beam elevation (deg)");
  app->add_option("--elevation-max", a.elevation_max, "Highest beam elevation (deg)");
  app->add_option("--sensor-height", a.sensor_height, "Default sensor height (m)");
  app->add_option("--extent", a.extent, "Ground half size (m)");
  app->add_option("--clutter", a.clutter, "Number of seeded clutter objects");
  app->add_option("--sensors", a.sensors, "Sensor positions as x y z triples (default: one at the origin)");
  app->add_option("--format", a.format, "auto, ply, ply-ascii or csv")
      ->check(CLI::IsMember({"auto", "ply", "ply-ascii", "csv"}));
}

int run_gen_scene(const CLI::App& app, const GenSceneArgs& a, std::ostream& out) {
  SceneSpec spec;
  spec.seed = a.seed;
  spec.azimuth = a.azimuth;
  spec.elevation = a.elevation;
  spec.elevation_min = a.elevation_min * kDeg;
  spec.elevation_max = a.elevation_max * kDeg;
  spec.sensor_height = a.sensor_height;
  spec.extent = a.extent;
  spec.random_clutter = a.clutter;
  if (a.sensors.size() % 3 != 0) throw UsageError("--sensors needs x y z triples");
  for (std::size_t i = 0; i + 2 < a.sensors.size(); i += 3) spec.sensors.emplace_back(a.sensors[i], a.sensors[i + 1], a.sensors[i + 2]);
  const Scene scene = generate(spec);
  const fs::path path(a.out);
  fs::create_directories(parent_or_cwd(path));
  if (a.format == "auto") {
    save_scene(path, scene);
  } else {
    save_scene(path, scene,
               a.format == "csv" ? SceneFormat::Csv : a.format == "ply" ? SceneFormat::PlyBinary : SceneFormat::PlyAscii);
  }
  write_resolved(app, parent_or_cwd(path));
  out << "wrote " << scene.size() << " points to " << path.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- attack

struct AttackArgs {
  std::string scene;
  DecoderArgs decoder;
  std::string out_dir;
  std::string mode = "shape";
  std::vector<double> pose;
  std::uint64_t placement_seed = 0;
  int placement_attempts = 50;
  double range_min = 15.0;
  double range_max = 30.0;
  double clear_radius = 8.0;
  int n_iter = 40;
  double alpha = 0.01;
  std::vector<double> lambda{1.0, 10.0};
  double eps_overlap = -0.02;
  double eps_float = 0.02;
  std::size_t min_points = 30;
  double roi_radius = 7.0;
  double min_range = 15.0;
  double xy_radius = 4.0;
  double pitch_roll_limit = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
  DetectorArgs detector;
};

void setup_attack(CLI::App* app, AttackArgs& a) {
  app->add_option("--scene", a.scene, "Scene file (.ply or .csv with sensors sidecar)")->required();
  add_decoder_options(app, a.decoder);
  app->add_option("--out-dir", a.out_dir, "Output directory")->required();
  app->add_option("--mode", a.mode, "shape or pose")->check(CLI::IsMember({"shape", "pose"}));
  app->add_option("--pose", a.pose, "Initial pose tx ty tz yaw pitch roll (default: sampled)")->expected(6);
  app->add_option("--placement-seed", a.placement_seed, "Seed of the sampled placement");
  app->add_option("--placement-attempts", a.placement_attempts, "Placement seeds tried before giving up");
  app->add_option("--range-min", a.range_min, "Closest placement range (m)");
  app->add_option("--range-max", a.range_max, "Farthest placement range (m)");
  app->add_option("--clear-radius", a.clear_radius, "Required clutter-free radius around a sampled placement (m)");
  app->add_option("--n-iter", a.n_iter, "Attack iterations");
  app->add_option("--alpha", a.alpha, "Step size");
  app->add_option("--lambda", a.lambda, "Shape regularizer weights to try");
  app->add_option("--eps-overlap", a.eps_overlap, "Overlap tolerance");
  app->add_option("--eps-float", a.eps_float, "Ground contact tolerance");
  app->add_option("--min-points", a.min_points, "Minimum on-object points");
  app->add_option("--roi-radius", a.roi_radius, "ROI sphere radius (m)");
  app->add_option("--min-range", a.min_range, "ROI near-field range (m)");
  app->add_option("--xy-radius", a.xy_radius, "Pose attack xy displacement limit (m)");
  app->add_option("--pitch-roll-limit", a.pitch_roll_limit, "Pose attack pitch/roll limit (rad)");
  app->add_option("--seed", a.seed, "Seed of the random baseline");
  app->add_option("--threads", a.threads, "Render worker threads")->check(CLI::PositiveNumber);
  add_detector_options(app, a.detector);
}

json condition_json(const Evaluation& ev) {
  return {{"score", ev.score},
          {"matched", match_detection(ev.detections, ev.gt).matched},
          {"gt", box_json(ev.gt)},
          {"moved", ev.rendered.moved_count},
          {"feasible", ev.feasible.all()}};
}

void save_rendered(const fs::path& path, const Scene& scene, const RenderedScene& r) {
  Scene s = scene;
  s.points = r.points;
  save_scene(path, s, SceneFormat::PlyBinary);
}

int run_attack(const CLI::App& app, const AttackArgs& a, std::ostream& out, std::ostream& err) {
  const Scene scene = load_scene(a.scene);
  const auto decoder = load_decoder(a.decoder);
  const LatentCode z0 = initial_code(*decoder, a.decoder.shape);
  const AttackMode mode = attack_mode_from_string(a.mode);
  if (a.lambda.empty()) throw UsageError("--lambda needs at least one value");

  AttackHyper hyper;
  hyper.n_iter = a.n_iter;
  hyper.alpha = a.alpha;
  hyper.lambda = a.lambda.front();
  hyper.eps_overlap = a.eps_overlap;
  hyper.eps_float = a.eps_float;
  hyper.min_points = a.min_points;
  hyper.pose_limits.xy_radius = a.xy_radius;
  hyper.pose_limits.pitch_roll_limit = a.pitch_roll_limit;
  hyper.render.threads = a.threads;
  Roi roi;
  roi.radius = a.roi_radius;
  roi.min_range = a.min_range;
  const DetectorConfig det_cfg = detector_config(a.detector);

  Pose pose0;
  std::uint64_t used_seed = 0;
  std::optional<ToyDetector> detector;
  if (!a.pose.empty()) {
    pose0 = pose_from_list(a.pose, "--pose");
    detector.emplace(ToyDetector::around(Vec2(pose0.tx(), pose0.ty()), a.detector.half_range, det_cfg));
  } else {
    PlacementSearch search;
    search.placement.range_min = a.range_min;
    search.placement.range_max = a.range_max;
    search.placement.clearance = hyper.ground_clearance;
    search.attempts = a.placement_attempts;
    search.clear_radius = a.clear_radius;
    search.detector = det_cfg;
    search.detector_half_range = a.detector.half_range;
    const auto placement = find_feasible_placement(scene, roi, *decoder, z0, hyper, search, a.placement_seed);
    if (!placement) {
      err << "error: no feasible placement within " << a.placement_attempts << " seeds\n";
      return kInfeasibleStart;
    }
    pose0 = placement->pose;
    used_seed = placement->seed;
    detector.emplace(placement->detector);
  }

  const AttackProblem problem{&scene, roi, decoder.get(), &*detector};
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_resolved(app, dir);

  AttackResult result;
  try {
    if (mode == AttackMode::Shape && a.lambda.size() > 1) {
      result = attack_select_lambda(problem, z0, pose0, hyper, a.lambda);
    } else {
      result = attack(mode, problem, z0, pose0, hyper);
    }
  } catch (const InfeasibleStart& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasibleStart;
  }

  const Evaluation base = evaluate(problem, z0, pose0, hyper);
  json conditions = {{"baseline", condition_json(base)}};
  save_rendered(dir / "initial.ply", scene, base.rendered);
  if (a.n_iter > 0) {
    const Evaluation adv = evaluate(problem, result.best_z, result.best_pose, hyper);
    conditions["adversarial"] = condition_json(adv);
    save_rendered(dir / "final.ply", scene, adv.rendered);
    write_text_file(dir / "detections.csv", detections_to_csv(adv.detections));
    if (mode == AttackMode::Shape) {
      const bool moved = (result.best_z - z0).norm() >= 1e-12;
      const LatentCode zr = moved ? random_baseline(z0, result.best_z, a.seed) : z0;
      conditions["random"] = condition_json(evaluate(problem, zr, pose0, hyper));
    } else {
      const ShapeProbe probe(*decoder, z0, hyper.probe_resolution);
      Pose pr = random_pose_baseline(pose0, result.best_pose, a.seed);
      pr = pr.with_tz(probe.grounded_tz(pr, hyper.ground_clearance));
      conditions["random"] = condition_json(evaluate(problem, z0, pr, hyper));
    }
  }

  json doc = {{"format_version", kFormatVersion},
              {"command", "attack"},
              {"family", a.decoder.shape},
              {"scene", fs::path(a.scene).filename().string()},
              {"placement", {{"pose", vec_json(pose0.as_vector())}, {"seed", used_seed}}},
              {"pose_limits", {{"xy_radius", a.xy_radius}, {"pitch_roll_limit", a.pitch_roll_limit}}},
              {"z0", vec_json(z0)},
              {"conditions", conditions},
              {"attack", json::parse(attack_result_to_json(result))}};
  write_json(dir / "result.json", doc);
  write_text_file(dir / "trace.csv", trace_to_csv(result));

  out << "initial score " << result.initial_score << ", best score " << result.best_score << " at iteration "
      << result.best_iter << " (lambda " << result.lambda << ")\n";
  if (result.no_feasible_step) {
    err << "warning: no feasible step; result holds the initial parameters\n";
    return kNoFeasibleStep;
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> inputs;
  std::string out_dir;
  int n_thresholds = 1001;
  double cell = 10.0;
};

void setup_eval(CLI::App* app, EvalArgs& a) {
  app->add_option("inputs", a.inputs, "Result files or glob patterns")->required();
  app->add_option("--out-dir", a.out_dir, "Output directory")->required();
  app->add_option("--n-thresholds", a.n_thresholds, "Threshold grid size")->check(CLI::Range(2, 1000001));
  app->add_option("--cell", a.cell, "Score-reduction grid cell (m)");
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& patterns) {
  std::set<std::string> files;
  for (const auto& p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.insert(g.gl_pathv[i]);
    }
    globfree(&g);
  }
  return {files.begin(), files.end()};
}

TrialOutcome outcome_from_json(const json& c, const std::string& id) {
  TrialOutcome o;
  const auto gt = c.at("gt").get<std::vector<double>>();
  o.gt = BevBox(gt.at(0), gt.at(1), gt.at(2), gt.at(3), gt.at(4));
  o.matched = c.at("matched").get<bool>();
  o.score = o.matched ? c.at("score").get<double>() : 0.0;
  o.scene_id = id;
  return o;
}

int run_eval(const CLI::App& app, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto files = expand_inputs(a.inputs);
  if (files.empty()) {
    err << "error: no result files match the inputs\n";
    return kUsage;
  }
  const std::vector<std::string> order{"baseline", "adversarial", "random"};
  std::map<std::string, std::map<std::string, std::vector<TrialOutcome>>> by_condition;  // condition -> family
  std::map<std::string, std::vector<std::pair<TrialOutcome, TrialOutcome>>> pairs;
  for (const auto& f : files) {
    json doc;
    try {
      doc = json::parse(read_text_file(f));
    } catch (const json::exception& e) {
      throw FormatError(f + ": " + e.what());
    }
    if (doc.value("format_version", "") != kFormatVersion) throw FormatError(f + ": unsupported format_version");
    const std::string family = doc.value("family", "unknown");
    const json& conds = doc.at("conditions");
    std::map<std::string, TrialOutcome> here;
    for (const auto& c : order) {
      if (!conds.contains(c)) continue;
      here[c] = outcome_from_json(conds.at(c), f);
      by_condition[c][family].push_back(here[c]);
    }
    for (const auto& c : {"adversarial", "random"}) {
      if (here.count("baseline") && here.count(c)) pairs[c].emplace_back(here["baseline"], here[c]);
    }
  }

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_resolved(app, dir);
  json table = json::object();
  std::set<std::string> families;
  for (const auto& c : order) {
    if (!by_condition.count(c)) continue;
    std::vector<TrialOutcome> all;
    json row = json::object();
    for (const auto& [family, outcomes] : by_condition[c]) {
      families.insert(family);
      row[family] = auc(threshold_recall(outcomes, a.n_thresholds));
      all.insert(all.end(), outcomes.begin(), outcomes.end());
    }
    const Curve curve = threshold_recall(all, a.n_thresholds);
    row["all"] = auc(curve);
    table[c] = row;
    write_text_file(dir / ("curve_" + c + ".csv"), curve_to_csv(curve));
    out << c << " AUC " << row["all"].get<double>() << " over " << all.size() << " results\n";
  }
  for (const auto& [c, p] : pairs) write_text_file(dir / ("grid_" + c + ".csv"), grid_to_csv(score_reduction_grid(p, a.cell), a.cell));
  json summary = {{"format_version", kFormatVersion},
                  {"command", "eval"},
                  {"n_results", files.size()},
                  {"families", std::vector<std::string>(families.begin(), families.end())},
                  {"auc", table}};
  write_json(dir / "auc.json", summary);
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string out;
  int samples = 200;
  int cases = 3;
  std::uint64_t seed = 0;
  bool inject_bug = false;
};

void setup_gradcheck(CLI::App* app, GradcheckArgs& a) {
  app->add_option("--out", a.out, "Report JSON file (also printed to stdout)");
  app->add_option("--samples", a.samples, "Random samples per decoder suite")->check(CLI::PositiveNumber);
  app->add_option("--cases", a.cases, "End-to-end scene configurations")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", a.seed, "Sampling seed");
  app->add_flag("--inject-grad-bug", a.inject_bug, "Corrupt the decoder weights used for gradients (negative control)");
}

std::unique_ptr<SdfDecoder> maybe_corrupt(std::unique_ptr<SdfDecoder> d, bool inject) {
  if (!inject) return d;
  std::unique_ptr<SdfDecoder> bad = d->clone();
  if (auto* mlp = dynamic_cast<MlpDecoder*>(bad.get())) {
    mlp->mutable_weights().w1 *= 1.05;
  } else if (auto* fam = dynamic_cast<AnalyticFamily*>(bad.get())) {
    ShapeParams base = fam->base();
    for (int i = 0; i < 6; ++i) base[static_cast<std::size_t>(i)] *= 1.05;
    AnalyticFamily shifted(base, fam->map(), fam->anchored(), fam->contact_depth());
    bad = std::make_unique<AnalyticFamily>(shifted);
  }
  return std::make_unique<SplitGradientDecoder>(std::move(d), std::move(bad));
}

int run_gradcheck(const CLI::App& app, const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  const AnalyticFamily vehicle = AnalyticFamily::vehicle();
  const auto analytic = maybe_corrupt(vehicle.clone(), a.inject_bug);
  const auto mlp = maybe_corrupt(MlpDecoder::random(16, 32, a.seed + 11).clone(), a.inject_bug);

  std::vector<SuiteReport> reports;
  reports.push_back(check_grad_point(*analytic, "analytic_grad_point", a.samples, a.seed + 1, 0.3, 3.0));
  reports.push_back(check_grad_latent(*analytic, "analytic_grad_latent", a.samples, a.seed + 2, 0.3, 3.0));
  reports.push_back(check_grad_point(*mlp, "mlp_grad_point", a.samples, a.seed + 3, 0.5, 2.0));
  reports.push_back(check_grad_latent(*mlp, "mlp_grad_latent", a.samples, a.seed + 4, 0.5, 2.0));
  reports.push_back(check_pose_jacobian(100, a.seed + 5));
  reports.push_back(check_detector_backward(5, a.seed + 6));
  if (a.cases > 0) {
    SuiteReport shape{"end_to_end_grad_shape", 0.0, 1e-2, 0, 0};
    SuiteReport pose{"end_to_end_grad_pose", 0.0, 1e-2, 0, 0};
    for (const auto& c : make_end_to_end_cases(vehicle, a.cases, a.seed + 7)) {
      for (auto [rep, res] : {std::pair{&shape, end_to_end_shape(c, *analytic)}, std::pair{&pose, end_to_end_pose(c, *analytic)}}) {
        Eigen::VectorXd an(res.analytic.size()), fd(res.numeric.size());
        Eigen::Index kept = 0;
        for (Eigen::Index j = 0; j < res.analytic.size(); ++j) {
          if (res.flipped[static_cast<std::size_t>(j)]) {
            ++rep->skipped;
            continue;
          }
          an[kept] = res.analytic[j];
          fd[kept] = res.numeric[j];
          ++kept;
        }
        rep->max_rel_error = std::max(rep->max_rel_error, relative_error(an.head(kept), fd.head(kept)));
        ++rep->samples;
      }
    }
    reports.push_back(shape);
    reports.push_back(pose);
  }

  json suites = json::array();
  std::vector<std::string> failed;
  for (const auto& r : reports) {
    suites.push_back({{"name", r.name},
                      {"max_rel_error", r.max_rel_error},
                      {"tolerance", r.tolerance},
                      {"samples", r.samples},
                      {"skipped", r.skipped},
                      {"passed", r.passed()}});
    if (!r.passed()) failed.push_back(r.name);
  }
  const json doc = {{"format_version", kFormatVersion},
                    {"command", "gradcheck"},
                    {"inject_grad_bug", a.inject_bug},
                    {"suites", suites},
                    {"passed", failed.empty()}};
  out << doc.dump(2) << "\n";
  if (!a.out.empty()) {
    const fs::path p(a.out);
    fs::create_directories(parent_or_cwd(p));
    write_json(p, doc);
    write_resolved(app, parent_or_cwd(p));
  }
  if (!failed.empty()) {
    err << "gradcheck failed:";
    for (const auto& f : failed) err << " " << f;
    err << "\n";
    return kCheckFailure;
  }
  return kOk;
}

// ---------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string points;
  std::vector<double> pose;
  DecoderArgs decoder;
  std::string pca;
  std::string out;
  std::string method = "gd";
  int steps = 200;
  double step_size = 0.05;
  bool mean_objective = false;
};

void add_method_option(CLI::App* app, std::string& method) {
  app->add_option("--method", method, "gd (fixed-step projected gradient) or lm (Levenberg-Marquardt)")
      ->check(CLI::IsMember({"gd", "lm"}));
}

ReconstructMethod method_from_string(const std::string& m) {
  return m == "lm" ? ReconstructMethod::LevenbergMarquardt : ReconstructMethod::GradientDescent;
}

void setup_reconstruct(CLI::App* app, ReconstructArgs& a) {
  app->add_option("--points", a.points, "On-object points (.ply or .csv)")->required();
  app->add_option("--pose", a.pose, "Object pose tx ty tz yaw pitch roll")->expected(6)->required();
  app->add_option("--decoder", a.decoder.decoder, "Decoder JSON file (empty: built-in vehicle family)");
  app->add_option("--pca", a.pca, "PCA subspace JSON file")->required();
  app->add_option("--out", a.out, "Output JSON file")->required();
  add_method_option(app, a.method);
  app->add_option("--steps", a.steps, "Gradient steps (iteration cap for lm)");
  app->add_option("--step-size", a.step_size, "Step size (gd only)");
  app->add_flag("--mean-objective", a.mean_objective, "Average the objective over points (gd only)");
}

int run_reconstruct(const CLI::App& app, const ReconstructArgs& a, std::ostream& out) {
  const std::string body = read_text_file(a.points);
  const Scene pts = fs::path(a.points).extension() == ".csv" ? scene_from_csv(body) : scene_from_ply(body);
  const auto decoder = load_decoder(a.decoder);
  const PcaSubspace pca = pca_from_json(read_text_file(a.pca));
  ReconstructOptions opt;
  opt.method = method_from_string(a.method);
  opt.steps = a.steps;
  opt.step_size = a.step_size;
  opt.mean_objective = a.mean_objective;
  const ReconstructResult r = reconstruct(pts.points, pose_from_list(a.pose, "--pose"), *decoder, pca, opt);
  const fs::path p(a.out);
  fs::create_directories(parent_or_cwd(p));
  write_json(p, {{"format_version", kFormatVersion},
                 {"command", "reconstruct"},
                 {"z", vec_json(r.z)},
                 {"objective", r.objective},
                 {"initial_objective", r.initial_objective},
                 {"best_step", r.best_step},
                 {"points", pts.size()}});
  write_resolved(app, parent_or_cwd(p));
  out << "objective " << r.objective << " (initial " << r.initial_objective << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- export-decoder / build-pool

struct ExportArgs {
  std::string family = "vehicle";
  int latent_dim = 16;
  std::uint64_t seed = 2024;
  std::string out;
  std::string pca_out;
  int pca_samples = 500;
};

void setup_export(CLI::App* app, ExportArgs& a) {
  app->add_option("--family", a.family, "vehicle, sphere or mlp")->check(CLI::IsMember({"vehicle", "sphere", "mlp"}));
  app->add_option("--latent-dim", a.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
  app->add_option("--seed", a.seed, "Basis / weight seed");
  app->add_option("--out", a.out, "Decoder JSON file")->required();
  app->add_option("--pca-out", a.pca_out, "Also write the family's natural-shape PCA (vehicle only)");
  app->add_option("--pca-samples", a.pca_samples, "Natural codes used for the PCA");
}

int run_export(const CLI::App& app, const ExportArgs& a, std::ostream& out) {
  std::unique_ptr<SdfDecoder> d;
  const AnalyticFamily vehicle = AnalyticFamily::vehicle(std::max(a.latent_dim, 12), a.seed);
  if (a.family == "vehicle") {
    d = vehicle.clone();
  } else if (a.family == "sphere") {
    d = AnalyticFamily::unit_sphere(a.latent_dim).clone();
  } else {
    MlpDecoder mlp = MlpDecoder::random(vehicle.latent_dim(), 32, a.seed);
    mlp.fit_output_layer(vehicle, 4000, 3.0, 0.3, a.seed + 1);
    d = mlp.clone();
  }
  const fs::path p(a.out);
  fs::create_directories(parent_or_cwd(p));
  write_text_file(p, decoder_to_json(*d));
  if (!a.pca_out.empty()) {
    if (a.family != "vehicle") throw UsageError("--pca-out needs --family vehicle");
    write_text_file(a.pca_out, pca_to_json(fit_family_pca(vehicle, a.pca_samples, a.seed)));
  }
  write_resolved(app, parent_or_cwd(p));
  out << "wrote " << d->kind() << " decoder to " << p.string() << "\n";
  return kOk;
}

struct PoolArgs {
  std::string out;
  std::string pca;
  int size = 200;
  std::uint64_t seed = 0;
  std::string method = "lm";
  int steps = 200;
  double step_size = 0.05;
  bool mean_objective = false;
};

void setup_pool(CLI::App* app, PoolArgs& a) {
  app->add_option("--out", a.out, "Pool JSON-lines file")->required();
  app->add_option("--pca", a.pca, "PCA JSON file (default: fit to the built-in family)");
  app->add_option("--size", a.size, "Pool entries")->check(CLI::PositiveNumber);
  app->add_option("--seed", a.seed, "Object seed");
  add_method_option(app, a.method);
  app->add_option("--steps", a.steps, "Reconstruction steps");
  app->add_option("--step-size", a.step_size, "Reconstruction step size");
  app->add_flag("--mean-objective", a.mean_objective, "Average the objective over points");
}

int run_pool(const CLI::App& app, const PoolArgs& a, std::ostream& out) {
  const AnalyticFamily family = AnalyticFamily::vehicle();
  const PcaSubspace pca = a.pca.empty() ? fit_family_pca(family) : pca_from_json(read_text_file(a.pca));
  PoolBuildOptions opt;
  opt.size = a.size;
  opt.seed = a.seed;
  opt.reconstruct.method = method_from_string(a.method);
  opt.reconstruct.steps = a.steps;
  opt.reconstruct.step_size = a.step_size;
  opt.reconstruct.mean_objective = a.mean_objective;
  const RetrievalPool pool = build_synthetic_pool(family, pca, observation_rig(), opt);
  const fs::path p(a.out);
  fs::create_directories(parent_or_cwd(p));
  write_text_file(p, pool_to_jsonl(pool));
  write_resolved(app, parent_or_cwd(p));
  out << "wrote " << pool.entries.size() << " pool entries to " << p.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::vector<std::string> inputs;
  double tolerance = 1e-9;
};

void setup_verify(CLI::App* app, VerifyArgs& a) {
  app->add_option("inputs", a.inputs, "Attack result files")->required();
  app->add_option("--tolerance", a.tolerance, "Slack on the pose limits");
}

int run_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  const auto files = expand_inputs(a.inputs);
  if (files.empty()) {
    err << "error: no result files match the inputs\n";
    return kUsage;
  }
  int violations = 0;
  for (const auto& f : files) {
    const json doc = json::parse(read_text_file(f));
    const AttackResult r = attack_result_from_json(doc.at("attack").dump());
    if (r.trace.empty()) throw FormatError(f + ": empty trace");
    PoseConstraint c;
    c.center = r.trace.front().pose;
    c.xy_radius = doc.at("pose_limits").at("xy_radius").get<double>();
    c.pitch_roll_limit = doc.at("pose_limits").at("pitch_roll_limit").get<double>();
    for (const auto& t : r.trace) {
      if (r.mode == AttackMode::Pose && !satisfies(t.pose, c, a.tolerance)) {
        err << f << ": iteration " << t.iter << " violates the pose limits\n";
        ++violations;
      }
    }
    const TraceEntry& best = r.trace.at(static_cast<std::size_t>(r.best_iter));
    if (!best.feasible.all()) {
      err << f << ": best iterate " << r.best_iter << " is not feasible\n";
      ++violations;
    }
    for (const auto& t : r.trace) {
      if (t.feasible.all() && t.loss < r.best_loss) {
        err << f << ": feasible iteration " << t.iter << " beats the recorded best\n";
        ++violations;
      }
    }
  }
  out << files.size() << " result(s), " << violations << " violation(s)\n";
  return violations == 0 ? kOk : kCheckFailure;
}

// Replaces `--config FILE` after the subcommand name with the file's options.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& argv) {
  if (argv.empty()) return argv;
  const CLI::App* sub = nullptr;
  for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
    if (s->get_name() == argv.front()) sub = s;
  }
  if (sub == nullptr) return argv;
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 1; i < argv.size(); ++i) {
    if (argv[i] == "--config") {
      if (i + 1 >= argv.size()) throw ConfigError("--config needs a file");
      path = argv[++i];
    } else if (argv[i].rfind("--config=", 0) == 0) {
      path = argv[i].substr(9);
    } else {
      rest.push_back(argv[i]);
    }
  }
  if (path.empty()) return argv;
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::string> out{argv.front()};
  const ConfigArguments expanded = config_arguments(*sub, text, rest);
  out.insert(out.end(), expanded.options.begin(), expanded.options.end());
  out.insert(out.end(), rest.begin(), rest.end());
  if (!expanded.positionals.empty()) {
    if (std::find(rest.begin(), rest.end(), "--") == rest.end()) out.push_back("--");
    out.insert(out.end(), expanded.positionals.begin(), expanded.positionals.end());
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial SDF object insertion for LiDAR scenes", "lidarsdf"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto make = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->option_defaults()->always_capture_default();
    sub->add_option("--config", "JSON config file; explicit flags override it");
    return sub;
  };

  GenSceneArgs gen;
  AttackArgs atk;
  EvalArgs ev;
  GradcheckArgs gc;
  ReconstructArgs rec;
  ExportArgs exp;
  PoolArgs pool;
  VerifyArgs ver;
  CLI::App* s_gen = make("gen-scene", "Generate a synthetic LiDAR scene");
  setup_gen_scene(s_gen, gen);
  CLI::App* s_atk = make("attack", "Run a shape or pose attack");
  setup_attack(s_atk, atk);
  CLI::App* s_eval = make("eval", "Threshold-recall curves and AUC over attack results");
  setup_eval(s_eval, ev);
  CLI::App* s_gc = make("gradcheck", "Finite-difference checks of every analytic gradient");
  setup_gradcheck(s_gc, gc);
  CLI::App* s_rec = make("reconstruct", "Fit a latent code in the PCA subspace to object points");
  setup_reconstruct(s_rec, rec);
  CLI::App* s_exp = make("export-decoder", "Write a decoder (and optionally its PCA) to JSON");
  setup_export(s_exp, exp);
  CLI::App* s_pool = make("build-pool", "Build the synthetic retrieval pool");
  setup_pool(s_pool, pool);
  CLI::App* s_ver = make("verify", "Check attack results against their pose limits and best-iterate rules");
  setup_verify(s_ver, ver);

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  try {
    argv = expand_config(app, argv);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s_gen->parsed()) return run_gen_scene(*s_gen, gen, out);
    if (s_atk->parsed()) return run_attack(*s_atk, atk, out, err);
    if (s_eval->parsed()) return run_eval(*s_eval, ev, out, err);
    if (s_gc->parsed()) return run_gradcheck(*s_gc, gc, out, err);
    if (s_rec->parsed()) return run_reconstruct(*s_rec, rec, out);
    if (s_exp->parsed()) return run_export(*s_exp, exp, out);
    if (s_pool->parsed()) return run_pool(*s_pool, pool, out);
    if (s_ver->parsed()) return run_verify(ver, out, err);
  } catch (const InfeasibleStart& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasibleStart;
  } catch (const Diverged& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailure;
  }
  return kUsage;
}

}  // namespace lidarsdf::cli
