#include <benchmark/benchmark.h>

#include <random>

#include "wmlock/evolve.hpp"
#include "wmlock/lesion_mask.hpp"
#include "wmlock/oracle.hpp"
#include "wmlock/raster.hpp"

using namespace wmlock;

namespace {

RgbaImage noise(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbaImage img(w, h);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng());
  return img;
}

WatermarkLogo logo(int side) {
  RgbaImage img(side, side);
  img.fill(255, 255, 255, 255);
  return WatermarkLogo{img, "bench", "0"};
}

TemplateModel spot_model(int size, int side) {
  TemplateModel m;
  m.width = size;
  m.height = size;
  m.softmax = true;
  for (int cls = 0; cls < 2; ++cls) {
    TemplatePatch p;
    p.class_index = cls;
    p.x = cls == 0 ? size / 8 : size - size / 8 - side;
    p.y = p.x;
    p.w = p.h = side;
    p.weight[0] = p.weight[1] = p.weight[2] = -0.08;
    p.pyramid = true;
    p.edge_fraction = 0.1;
    m.patches.push_back(p);
  }
  m.build_weights();
  return m;
}

}  // namespace

static void BM_Blend(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const RgbaImage host = noise(side * 4, side * 4, 1);
  const WatermarkLogo l = logo(side);
  for (auto _ : state) {
    benchmark::DoNotOptimize(blend(host, l, Placement{180, side, side, side, side}));
  }
}
BENCHMARK(BM_Blend)->Arg(32)->Arg(128);

static void BM_ScaleLogo(benchmark::State& state) {
  const WatermarkLogo l{noise(100, 50, 2), "bench", "0"};
  for (auto _ : state) benchmark::DoNotOptimize(scale_logo(l, 640, 480, 4.0));
}
BENCHMARK(BM_ScaleLogo);

static void BM_Dilate(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  BinaryMask m(side, side);
  std::mt19937_64 rng(3);
  for (int i = 0; i < side * side / 50; ++i) m.set(int(rng() % side), int(rng() % side));
  MaskConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dilate(m, cfg));
}
BENCHMARK(BM_Dilate)->Arg(64)->Arg(512);

static void BM_ConnectedRegions(benchmark::State& state) {
  BinaryMask m(512, 512);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 512 * 512 / 3; ++i) m.set(int(rng() % 512), int(rng() % 512));
  for (auto _ : state) benchmark::DoNotOptimize(connected_regions(m));
}
BENCHMARK(BM_ConnectedRegions);

static void BM_TemplateScore(benchmark::State& state) {
  TemplateOracle o(spot_model(64, 16));
  const RgbaImage img = noise(64, 64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(o.score(img));
}
BENCHMARK(BM_TemplateScore);

static void BM_AttackImage(benchmark::State& state) {
  const TemplateModel model = spot_model(64, 16);
  const RgbaImage host = noise(64, 64, 6);
  const WatermarkLogo l = logo(16);
  const ConstraintRegion region(ConstraintMode::kWap, {}, 64, 64, 16, 16);
  EsConfig cfg;
  cfg.early_stop = false;
  for (auto _ : state) {
    TemplateOracle o(model);
    benchmark::DoNotOptimize(attack_image(host, 0, l, o, region, cfg));
  }
}
BENCHMARK(BM_AttackImage)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
