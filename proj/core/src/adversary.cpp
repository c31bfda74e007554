#include "lidarsdf/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/eval.hpp"
#include "lidarsdf/io.hpp"
#include "lidarsdf/object_extent.hpp"

namespace lidarsdf {

namespace {

struct MaskedTerm {
  std::size_t index;
  Vec3 e;
  double k;
  SdfEvaluation eval;
  Vec3 grad_x;  // dg/dx in the sensor frame
  double denom;
};

// Visits masked points in index order, skipping grazing beams.
template <typename Fn>
std::size_t for_each_masked(const Scene& scene, const RenderedScene& rendered, const SdfDecoder& decoder,
                            const LatentCode& z, const Pose& pose, Fn&& fn) {
  if (rendered.points.size() != scene.size()) throw InvalidArgument("rendered scene does not match the input scene");
  const Mat3 rt = object_rotation(pose).transpose();
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < rendered.points.size(); ++i) {
    if (!rendered.mask[i]) continue;
    const Vec3& s = scene.sensor_of(i);
    const Beam beam = beam_from_point(s, scene.points[i]);
    MaskedTerm t{i, beam.direction, (rendered.points[i] - s).dot(beam.direction),
                 decoder.evaluate(z, to_object_frame(rendered.points[i], pose)), Vec3::Zero(), 0.0};
    t.grad_x = rt * t.eval.grad_point;
    t.denom = t.e.dot(t.grad_x);
    if (std::abs(t.denom) < kGrazingThreshold) {
      ++dropped;
      continue;
    }
    fn(t);
  }
  return dropped;
}

double wrapped_difference(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

}  // namespace

ShapeGradient grad_shape(const Scene& scene, const RenderedScene& rendered, const SdfDecoder& decoder,
                         const LatentCode& z, const Pose& pose, const std::vector<Vec3>& point_grads) {
  ShapeGradient out;
  out.grad = Eigen::VectorXd::Zero(decoder.latent_dim());
  out.grazing_dropped = for_each_masked(scene, rendered, decoder, z, pose, [&](const MaskedTerm& t) {
    const double coef = t.e.dot(point_grads[t.index]) / t.denom;
    out.grad -= coef * t.eval.grad_latent;
  });
  return out;
}

PoseGradient grad_pose(const Scene& scene, const RenderedScene& rendered, const SdfDecoder& decoder,
                       const LatentCode& z, const Pose& pose, const std::vector<Vec3>& point_grads,
                       const SensorMotion& motion) {
  PoseGradient out;
  out.grazing_dropped = for_each_masked(scene, rendered, decoder, z, pose, [&](const MaskedTerm& t) {
    const Vec3& dl_dx = point_grads[t.index];
    Mat36 moved = Mat36::Zero();  // d(s + k e)/dpose at fixed k
    if (motion.ds_dpose) moved += motion.ds_dpose(t.index);
    if (motion.de_dpose) moved += t.k * motion.de_dpose(t.index);
    const Mat36 jac = pose_jacobian(rendered.points[t.index], pose);
    const Eigen::Matrix<double, 1, 6> dk =
        -(t.grad_x.transpose() * moved + t.eval.grad_point.transpose() * jac) / t.denom;
    out.grad += (dl_dx.transpose() * moved).transpose() + t.e.dot(dl_dx) * dk.transpose();
  });
  return out;
}

Pose project_pose(const Pose& pose, const PoseConstraint& c) {
  const Vec2 offset(pose.tx() - c.center.tx(), pose.ty() - c.center.ty());
  const double r = offset.norm();
  Vec2 xy(pose.tx(), pose.ty());
  // The slack absorbs the rounding of a previous projection so that projecting twice is a no-op.
  if (r > c.xy_radius * (1.0 + 1e-12)) xy = Vec2(c.center.tx(), c.center.ty()) + (c.xy_radius / r) * offset;
  const double pitch = std::clamp(pose.pitch(), c.center.pitch() - c.pitch_roll_limit, c.center.pitch() + c.pitch_roll_limit);
  const double roll = std::clamp(pose.roll(), c.center.roll() - c.pitch_roll_limit, c.center.roll() + c.pitch_roll_limit);
  const double yaw = c.yaw_free ? pose.yaw() : c.center.yaw();
  return Pose(xy.x(), xy.y(), pose.tz(), yaw, pitch, roll);
}

bool satisfies(const Pose& pose, const PoseConstraint& c, double tol) {
  const Vec2 offset(pose.tx() - c.center.tx(), pose.ty() - c.center.ty());
  if (offset.norm() > c.xy_radius + tol) return false;
  if (std::abs(pose.pitch() - c.center.pitch()) > c.pitch_roll_limit + tol) return false;
  if (std::abs(pose.roll() - c.center.roll()) > c.pitch_roll_limit + tol) return false;
  if (!c.yaw_free && std::abs(wrapped_difference(pose.yaw(), c.center.yaw())) > tol) return false;
  return true;
}

namespace {

Evaluation evaluate_with_extent(const AttackProblem& problem, const LatentCode& z, const Pose& pose,
                                const AttackHyper& hyper, const ObjectExtent& extent) {
  Evaluation ev;
  Roi roi = problem.roi;
  roi.center = pose.translation();
  ev.rendered = render(*problem.scene, roi, *problem.decoder, z, pose, hyper.render);
  ev.detections = problem.detector->detect(ev.rendered.points);
  ev.gt = gt_box(extent, pose);
  ev.loss = adv_loss(ev.detections, ev.gt);
  ev.score = match_detection(ev.detections, ev.gt).score;
  ev.feasible.no_overlap = check_no_overlap(*problem.scene, *problem.decoder, z, pose, hyper.eps_overlap);
  ev.feasible.grounded = check_grounded(*problem.scene, *problem.decoder, z, pose, hyper.eps_float);
  ev.feasible.visible = check_visible(ev.rendered, hyper.min_points);
  return ev;
}

void check_problem(const AttackProblem& p) {
  if (!p.scene || !p.decoder || !p.detector) throw InvalidArgument("attack problem is incomplete");
}

}  // namespace

Evaluation evaluate(const AttackProblem& problem, const LatentCode& z, const Pose& pose, const AttackHyper& hyper) {
  check_problem(problem);
  const ShapeProbe probe(*problem.decoder, z, hyper.probe_resolution);
  return evaluate_with_extent(problem, z, pose, hyper, probe.extent());
}

AttackResult attack(AttackMode mode, const AttackProblem& problem, const LatentCode& z0, const Pose& pose0,
                    const AttackHyper& hyper) {
  check_problem(problem);
  if (hyper.n_iter < 0) throw InvalidArgument("n_iter must be non-negative");
  if (hyper.lambda < 0.0) throw InvalidArgument("lambda must be non-negative");
  const SdfDecoder& decoder = *problem.decoder;
  PoseConstraint limits = hyper.pose_limits;
  limits.center = pose0;

  LatentCode z = z0;
  Pose pose = pose0;
  // Pose mode never changes z, so one probe serves every iteration.
  std::optional<ShapeProbe> fixed_probe;
  if (mode == AttackMode::Pose) fixed_probe.emplace(decoder, z0, hyper.probe_resolution);
  const std::optional<ObjectExtent> fixed_extent =
      fixed_probe ? std::optional<ObjectExtent>(fixed_probe->extent()) : std::nullopt;

  auto run_eval = [&] {
    if (fixed_extent) return evaluate_with_extent(problem, z, pose, hyper, *fixed_extent);
    const ShapeProbe probe(decoder, z, hyper.probe_resolution);
    return evaluate_with_extent(problem, z, pose, hyper, probe.extent());
  };

  AttackResult result;
  result.mode = mode;
  result.lambda = hyper.lambda;
  Evaluation ev = run_eval();
  if (!ev.feasible.all()) {
    throw InfeasibleStart(std::string("initial placement fails realism checks:") +
                          (ev.feasible.no_overlap ? "" : " overlap") + (ev.feasible.grounded ? "" : " floating") +
                          (ev.feasible.visible ? "" : " not-visible"));
  }

  auto record = [&](int iter, std::size_t grazing) {
    TraceEntry t;
    t.iter = iter;
    t.adv_loss = ev.loss.value;
    t.loss = mode == AttackMode::Shape ? shape_objective(ev.loss.value, z, z0, hyper.lambda) : ev.loss.value;
    t.score = ev.score;
    t.feasible = ev.feasible;
    t.moved = ev.rendered.moved_count;
    t.grazing_dropped = grazing;
    t.z = z;
    t.pose = pose;
    result.trace.push_back(t);
    return t;
  };

  const TraceEntry first = record(0, 0);
  result.initial_score = first.score;
  result.best_z = z;
  result.best_pose = pose;
  result.best_loss = first.loss;
  result.best_adv_loss = first.adv_loss;
  result.best_score = first.score;
  result.best_iter = 0;
  bool any_feasible_step = false;

  // False after an iterate whose shape could not be probed or rendered; the
  // next step then follows the regularizer alone.
  bool evaluated = true;
  for (int it = 1; it <= hyper.n_iter; ++it) {
    std::size_t grazing = 0;
    if (mode == AttackMode::Shape && !evaluated) {
      z = z - hyper.alpha * shape_regularizer_gradient(z, z0, hyper.lambda);
    } else if (mode == AttackMode::Shape) {
      const std::vector<Vec3> point_grads = problem.detector->backward(ev.rendered.points, ev.loss.dl_dscore);
      ShapeGradient g = grad_shape(*problem.scene, ev.rendered, decoder, z, pose, point_grads);
      grazing = g.grazing_dropped;
      z = z - hyper.alpha * (g.grad + shape_regularizer_gradient(z, z0, hyper.lambda));
    } else {
      const std::vector<Vec3> point_grads = problem.detector->backward(ev.rendered.points, ev.loss.dl_dscore);
      PoseGradient g = grad_pose(*problem.scene, ev.rendered, decoder, z, pose, point_grads);
      grazing = g.grazing_dropped;
      pose = project_pose(Pose::from_vector(pose.as_vector() - hyper.alpha * g.grad), limits);
      pose = pose.with_tz(fixed_probe->grounded_tz(pose, hyper.ground_clearance));
    }
    if (!z.allFinite() || !pose.as_vector().allFinite()) throw Diverged("attack produced non-finite parameters");
    try {
      ev = run_eval();
      evaluated = true;
    } catch (const DegenerateShape&) {
      evaluated = false;
    } catch (const ObjectAtSensor&) {
      evaluated = false;
    }
    if (!evaluated) {
      TraceEntry t;
      t.iter = it;
      t.loss = t.adv_loss = std::numeric_limits<double>::infinity();
      t.z = z;
      t.pose = pose;
      result.trace.push_back(t);
      continue;
    }
    const TraceEntry t = record(it, grazing);
    if (!t.feasible.all()) continue;
    any_feasible_step = true;
    if (t.loss < result.best_loss) {
      result.best_z = z;
      result.best_pose = pose;
      result.best_loss = t.loss;
      result.best_adv_loss = t.adv_loss;
      result.best_score = t.score;
      result.best_iter = it;
    }
  }
  result.iterations = hyper.n_iter;
  result.no_feasible_step = hyper.n_iter > 0 && !any_feasible_step;
  return result;
}

AttackResult attack_select_lambda(const AttackProblem& problem, const LatentCode& z0, const Pose& pose0,
                                  AttackHyper hyper, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw InvalidArgument("no lambda candidates");
  std::optional<AttackResult> best;
  for (double lambda : lambdas) {
    hyper.lambda = lambda;
    AttackResult r = attack(AttackMode::Shape, problem, z0, pose0, hyper);
    if (!best || r.best_adv_loss < best->best_adv_loss ||
        (r.best_adv_loss == best->best_adv_loss && r.lambda > best->lambda)) {
      best = std::move(r);
    }
  }
  return *best;
}

std::optional<Placement> find_feasible_placement(const Scene& scene, const Roi& roi, const SdfDecoder& decoder,
                                                 const LatentCode& z, const AttackHyper& hyper,
                                                 const PlacementSearch& search, std::uint64_t seed) {
  const ShapeProbe probe(decoder, z, hyper.probe_resolution);
  const ObjectExtent extent = probe.extent();
  for (int k = 0; k < search.attempts; ++k) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
    const Pose pose = sample_placement(probe, search.placement, s);
    if (search.clear_radius > 0.0) {
      const Vec2 c(pose.tx(), pose.ty());
      const bool blocked = std::any_of(scene.points.begin(), scene.points.end(), [&](const Vec3& p) {
        return p.z() > search.clear_height && (p.head<2>() - c).norm() < search.clear_radius;
      });
      if (blocked) continue;
    }
    ToyDetector detector = ToyDetector::around(Vec2(pose.tx(), pose.ty()), search.detector_half_range, search.detector);
    const AttackProblem problem{&scene, roi, &decoder, &detector};
    if (!evaluate_with_extent(problem, z, pose, hyper, extent).feasible.all()) continue;
    return Placement{pose, s, std::move(detector)};
  }
  return std::nullopt;
}

LatentCode random_baseline(const LatentCode& z0, const LatentCode& z_adv, std::uint64_t seed) {
  const double radius = (z_adv - z0).norm();
  if (!(radius >= 1e-12)) throw DegenerateRadius("|z_adv - z0| is below 1e-12");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(z0.size());
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return z0 + radius * (v / v.norm());
}

std::vector<LatentCode> robustness_noise(const LatentCode& z_adv, double sigma, int n, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LatentCode> out;
  for (int k = 0; k < n; ++k) {
    LatentCode z = z_adv;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += sigma * normal(rng);
    out.push_back(std::move(z));
  }
  return out;
}

Pose random_pose_baseline(const Pose& pose0, const Pose& pose_adv, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::bernoulli_distribution coin(0.5);
  const double r = std::hypot(pose_adv.tx() - pose0.tx(), pose_adv.ty() - pose0.ty());
  const double phi = angle(rng);
  auto flip = [&](double magnitude) { return coin(rng) ? magnitude : -magnitude; };
  const double dyaw = flip(std::abs(wrapped_difference(pose_adv.yaw(), pose0.yaw())));
  const double dpitch = flip(std::abs(pose_adv.pitch() - pose0.pitch()));
  const double droll = flip(std::abs(pose_adv.roll() - pose0.roll()));
  return Pose(pose0.tx() + r * std::cos(phi), pose0.ty() + r * std::sin(phi), pose0.tz(), pose0.yaw() + dyaw,
              pose0.pitch() + dpitch, pose0.roll() + droll);
}

std::string to_string(AttackMode mode) { return mode == AttackMode::Shape ? "shape" : "pose"; }

AttackMode attack_mode_from_string(const std::string& name) {
  if (name == "shape") return AttackMode::Shape;
  if (name == "pose") return AttackMode::Pose;
  throw InvalidArgument("unknown attack mode '" + name + "'");
}

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Unevaluated iterates carry an infinite loss, which JSON stores as null.
double loss_from_json(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

}  // namespace

std::string attack_result_to_json(const AttackResult& r) {
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({{"iter", t.iter},
                     {"loss", t.loss},
                     {"adv_loss", t.adv_loss},
                     {"score", t.score},
                     {"no_overlap", t.feasible.no_overlap},
                     {"grounded", t.feasible.grounded},
                     {"visible", t.feasible.visible},
                     {"moved", t.moved},
                     {"grazing_dropped", t.grazing_dropped},
                     {"z", vec_json(t.z)},
                     {"pose", vec_json(t.pose.as_vector())}});
  }
  json doc = {{"format_version", kFormatVersion},
              {"mode", to_string(r.mode)},
              {"lambda", r.lambda},
              {"best",
               {{"z", vec_json(r.best_z)},
                {"pose", vec_json(r.best_pose.as_vector())},
                {"loss", r.best_loss},
                {"adv_loss", r.best_adv_loss},
                {"score", r.best_score},
                {"iter", r.best_iter}}},
              {"initial_score", r.initial_score},
              {"no_feasible_step", r.no_feasible_step},
              {"iterations", r.iterations},
              {"trace", trace}};
  return doc.dump(2) + "\n";
}

AttackResult attack_result_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format_version").get<std::string>() != kFormatVersion) throw FormatError("unsupported format_version");
    AttackResult r;
    r.mode = attack_mode_from_string(doc.at("mode").get<std::string>());
    r.lambda = doc.at("lambda").get<double>();
    const json& b = doc.at("best");
    r.best_z = json_vec(b.at("z"));
    r.best_pose = Pose::from_vector(json_vec(b.at("pose")));
    r.best_loss = b.at("loss").get<double>();
    r.best_adv_loss = b.at("adv_loss").get<double>();
    r.best_score = b.at("score").get<double>();
    r.best_iter = b.at("iter").get<int>();
    r.initial_score = doc.at("initial_score").get<double>();
    r.no_feasible_step = doc.at("no_feasible_step").get<bool>();
    r.iterations = doc.at("iterations").get<int>();
    for (const auto& t : doc.at("trace")) {
      TraceEntry e;
      e.iter = t.at("iter").get<int>();
      e.loss = loss_from_json(t.at("loss"));
      e.adv_loss = loss_from_json(t.at("adv_loss"));
      e.score = t.at("score").get<double>();
      e.feasible = {t.at("no_overlap").get<bool>(), t.at("grounded").get<bool>(), t.at("visible").get<bool>()};
      e.moved = t.at("moved").get<std::size_t>();
      e.grazing_dropped = t.at("grazing_dropped").get<std::size_t>();
      e.z = json_vec(t.at("z"));
      e.pose = Pose::from_vector(json_vec(t.at("pose")));
      r.trace.push_back(std::move(e));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad attack result: ") + e.what());
  }
}

std::string trace_to_csv(const AttackResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "iter,loss,score,feasible\n";
  for (const auto& t : result.trace) os << t.iter << ',' << t.loss << ',' << t.score << ',' << (t.feasible.all() ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace lidarsdf
