#include "lidarsdf/shapefit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/object_extent.hpp"
#include "lidarsdf/scenegen.hpp"

namespace lidarsdf {

double reconstruction_objective(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                                const LatentCode& z, Eigen::VectorXd* grad) {
  double sum = 0.0;
  if (grad) *grad = Eigen::VectorXd::Zero(z.size());
  for (const Vec3& x : points) {
    const Vec3 p = to_object_frame(x, pose);
    if (grad) {
      const SdfEvaluation e = decoder.evaluate(z, p);
      sum += e.value * e.value;
      *grad += 2.0 * e.value * e.grad_latent;
    } else {
      const double g = decoder.eval(z, p);
      sum += g * g;
    }
  }
  return sum;
}

namespace {

// Residuals g(z, T(x_i)) and, optionally, their latent Jacobian (rows = points).
Eigen::VectorXd residuals(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                          const LatentCode& z, Eigen::MatrixXd* jac) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(points.size()));
  if (jac) jac->resize(r.size(), z.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vec3 p = to_object_frame(points[i], pose);
    if (jac) {
      const SdfEvaluation e = decoder.evaluate(z, p);
      r[row] = e.value;
      jac->row(row) = e.grad_latent.transpose();
    } else {
      r[row] = decoder.eval(z, p);
    }
  }
  return r;
}

void check_growth(double obj, double initial) {
  if (!std::isfinite(obj) || obj > 1e3 * initial) {
    throw Diverged("reconstruction objective grew past 1e3x its initial value");
  }
}

void record(ReconstructResult& out, const LatentCode& z, double obj, int step) {
  out.trace.push_back(obj);
  if (obj < out.objective) {
    out.objective = obj;
    out.z = z;
    out.best_step = step;
  }
}

ReconstructResult gradient_descent(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                                   const PcaSubspace& pca, const ReconstructOptions& options, LatentCode z) {
  const double scale = options.mean_objective ? 1.0 / static_cast<double>(points.size()) : 1.0;
  ReconstructResult out;
  Eigen::VectorXd grad;
  double obj = reconstruction_objective(points, pose, decoder, z, &grad);
  out.initial_objective = obj;
  out.z = z;
  out.objective = obj;
  out.trace.push_back(obj);
  for (int step = 1; step <= options.steps; ++step) {
    z -= options.step_size * scale * pca.project_direction(grad);
    obj = reconstruction_objective(points, pose, decoder, z, &grad);
    check_growth(obj, out.initial_objective);
    record(out, z, obj, step);
  }
  return out;
}

ReconstructResult levenberg_marquardt(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                                      const PcaSubspace& pca, const ReconstructOptions& options, LatentCode z) {
  ReconstructResult out;
  Eigen::MatrixXd jac;
  Eigen::VectorXd r = residuals(points, pose, decoder, z, &jac);
  double obj = r.squaredNorm();
  out.initial_objective = obj;
  out.z = z;
  out.objective = obj;
  out.trace.push_back(obj);
  double mu = 1e-3;
  for (int step = 1; step <= options.steps && mu < 1e10; ++step) {
    const Eigen::MatrixXd jb = jac * pca.basis;
    const Eigen::MatrixXd a = jb.transpose() * jb;
    const Eigen::VectorXd g = jb.transpose() * r;
    Eigen::MatrixXd damped = a;
    damped.diagonal() += mu * a.diagonal() + Eigen::VectorXd::Constant(a.rows(), 1e-12);
    const Eigen::VectorXd delta = -damped.ldlt().solve(g);
    const LatentCode trial = z + pca.basis * delta;
    Eigen::MatrixXd trial_jac;
    const Eigen::VectorXd trial_r = residuals(points, pose, decoder, trial, &trial_jac);
    const double trial_obj = trial_r.squaredNorm();
    if (std::isfinite(trial_obj) && trial_obj < obj) {
      z = trial;
      r = trial_r;
      jac = std::move(trial_jac);
      obj = trial_obj;
      mu = std::max(mu / 3.0, 1e-9);
    } else {
      mu *= 4.0;
    }
    record(out, z, obj, step);
  }
  return out;
}

}  // namespace

ReconstructResult reconstruct(const std::vector<Vec3>& points, const Pose& pose, const SdfDecoder& decoder,
                              const PcaSubspace& pca, const ReconstructOptions& options) {
  if (points.size() < 10) throw InvalidArgument("reconstruction needs at least 10 points");
  if (options.steps < 0 || !(options.step_size >= 0.0)) throw InvalidArgument("bad reconstruction schedule");
  const LatentCode z = pca.project(options.start.value_or(pca.mean));
  if (options.method == ReconstructMethod::LevenbergMarquardt) {
    return levenberg_marquardt(points, pose, decoder, pca, options, z);
  }
  return gradient_descent(points, pose, decoder, pca, options, z);
}

std::optional<Retrieval> retrieve_nearest(const RetrievalPool& pool, const LatentCode& z_query) {
  if (pool.entries.empty()) throw InvalidArgument("retrieval pool is empty");
  const PoolEntry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : pool.entries) {
    if (e.z.size() != z_query.size()) throw InvalidArgument("pool entry dimension mismatch");
    const double d = (e.z - z_query).norm();
    if (!best || d < best_d || (d == best_d && e.id < best->id)) {
      best = &e;
      best_d = d;
    }
  }
  if (!(best_d < z_query.norm())) return std::nullopt;
  return Retrieval{best->id, best->z, best_d};
}

std::string pool_to_jsonl(const RetrievalPool& pool) {
  std::string out;
  for (const auto& e : pool.entries) {
    nlohmann::json j = {{"id", e.id}, {"z", std::vector<double>(e.z.data(), e.z.data() + e.z.size())}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PoolEntry> pool_entries_from_jsonl(const std::string& text) {
  std::vector<PoolEntry> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto v = j.at("z").get<std::vector<double>>();
      out.push_back({j.at("id").get<int>(), Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad pool line: ") + e.what());
    }
  }
  return out;
}

PcaSubspace fit_family_pca(const AnalyticFamily& family, int samples, std::uint64_t seed, int components) {
  std::vector<LatentCode> codes;
  codes.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) codes.push_back(family.sample_natural(seed + static_cast<std::uint64_t>(i)));
  return fit_pca(codes, components);
}

Scene observation_rig(double ring_radius, int azimuth, int elevation) {
  SceneSpec spec;
  spec.azimuth = azimuth;
  spec.elevation = elevation;
  spec.extent = 2.0 * ring_radius + 20.0;
  for (int k = 0; k < 4; ++k) {
    const double a = 0.5 * std::numbers::pi * k;
    spec.sensors.emplace_back(ring_radius * std::cos(a), ring_radius * std::sin(a), spec.sensor_height);
  }
  return generate(spec);
}

std::vector<Vec3> observe_object(const Scene& rig, const SdfDecoder& decoder, const LatentCode& z, const Pose& pose,
                                 const RenderOptions& options) {
  Roi roi;
  roi.center = pose.translation();
  const RenderedScene r = render(rig, roi, decoder, z, pose, options);
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    if (r.mask[i]) out.push_back(r.points[i]);
  }
  return out;
}

SyntheticObject synthetic_object(const AnalyticFamily& family, const Scene& rig, int id, std::uint64_t seed) {
  SyntheticObject o;
  o.id = id;
  const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(id);
  o.z_true = family.sample_natural(s);
  std::mt19937_64 rng(s);
  const double yaw = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const ShapeProbe probe(family, o.z_true);
  const Pose flat(0.0, 0.0, 0.0, yaw, 0.0, 0.0);
  o.pose = flat.with_tz(probe.grounded_tz(flat, 0.005));
  o.points = observe_object(rig, family, o.z_true, o.pose);
  return o;
}

RetrievalPool build_synthetic_pool(const AnalyticFamily& family, const PcaSubspace& pca, const Scene& rig,
                                   const PoolBuildOptions& options, std::vector<SyntheticObject>* objects) {
  RetrievalPool pool;
  pool.pca = pca;
  for (int id = 0; id < options.size; ++id) {
    SyntheticObject o = synthetic_object(family, rig, id, options.seed);
    const ReconstructResult fit = reconstruct(o.points, o.pose, family, pca, options.reconstruct);
    pool.entries.push_back({id, fit.z});
    if (objects) objects->push_back(std::move(o));
  }
  return pool;
}

}  // namespace lidarsdf
