#include <benchmark/benchmark.h>

#include <stdexcept>

#include "lidarsdf/adversary.hpp"
#include "lidarsdf/detector.hpp"
#include "lidarsdf/render.hpp"
#include "lidarsdf/scenegen.hpp"
#include "lidarsdf/sdf.hpp"

using namespace lidarsdf;

namespace {

struct Fixture {
  Scene scene;
  AnalyticFamily family = AnalyticFamily::vehicle();
  LatentCode z = family.named_code("sedan");
  Placement placement;
  Roi roi;

  Fixture() : scene(make_scene()), placement(place(scene, family, z)) { roi.center = placement.pose.translation(); }

  static Scene make_scene() {
    SceneSpec spec;
    spec.seed = 2;
    spec.random_clutter = 6;
    return generate(spec);
  }

  static Placement place(const Scene& scene, const AnalyticFamily& family, const LatentCode& z) {
    PlacementSearch search;
    search.clear_radius = 8.0;
    auto p = find_feasible_placement(scene, Roi{}, family, z, AttackHyper{}, search, 200);
    if (!p) throw std::runtime_error("no feasible placement");
    return *p;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_GenerateScene(benchmark::State& state) {
  SceneSpec spec;
  spec.random_clutter = 6;
  for (auto _ : state) benchmark::DoNotOptimize(generate(spec));
}
BENCHMARK(BM_GenerateScene)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(render(f.scene, f.roi, f.family, f.z, f.placement.pose));
}
BENCHMARK(BM_Render)->Unit(benchmark::kMillisecond);

void BM_Detect(benchmark::State& state) {
  const Fixture& f = fixture();
  const RenderedScene r = render(f.scene, f.roi, f.family, f.z, f.placement.pose);
  for (auto _ : state) benchmark::DoNotOptimize(f.placement.detector.detect(r.points));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMillisecond);

void BM_DetectorBackward(benchmark::State& state) {
  const Fixture& f = fixture();
  const RenderedScene r = render(f.scene, f.roi, f.family, f.z, f.placement.pose);
  const std::vector<Detection> dets = f.placement.detector.detect(r.points);
  const BevBox gt = gt_box(ShapeProbe(f.family, f.z).extent(), f.placement.pose);
  const AdvLoss loss = adv_loss(dets, gt);
  for (auto _ : state) benchmark::DoNotOptimize(f.placement.detector.backward(r.points, loss.dl_dscore));
}
BENCHMARK(BM_DetectorBackward)->Unit(benchmark::kMillisecond);

void BM_Gradients(benchmark::State& state) {
  const Fixture& f = fixture();
  const RenderedScene r = render(f.scene, f.roi, f.family, f.z, f.placement.pose);
  const BevBox gt = gt_box(ShapeProbe(f.family, f.z).extent(), f.placement.pose);
  const AdvLoss loss = adv_loss(f.placement.detector.detect(r.points), gt);
  const std::vector<Vec3> dx = f.placement.detector.backward(r.points, loss.dl_dscore);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_shape(f.scene, r, f.family, f.z, f.placement.pose, dx));
    benchmark::DoNotOptimize(grad_pose(f.scene, r, f.family, f.z, f.placement.pose, dx));
  }
}
BENCHMARK(BM_Gradients)->Unit(benchmark::kMicrosecond);

void BM_ShapeProbe(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(ShapeProbe(f.family, f.z).extent());
}
BENCHMARK(BM_ShapeProbe)->Unit(benchmark::kMillisecond);

void BM_IouBev(benchmark::State& state) {
  const BevBox a(0.0, 0.0, 4.5, 1.8, 0.3);
  const BevBox b(0.7, 0.4, 4.0, 2.0, 1.1);
  for (auto _ : state) benchmark::DoNotOptimize(iou_bev(a, b));
}
BENCHMARK(BM_IouBev);

}  // namespace
BENCHMARK_MAIN();
