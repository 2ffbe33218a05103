#include <random>

#include <benchmark/benchmark.h>

#include "xloc/matching.hpp"
#include "xloc/pnp.hpp"
#include "xloc/retrieval.hpp"

namespace xloc {
namespace {

const CameraIntrinsics kK = make_intrinsics(500.0, 500.0, 320.0, 240.0, 640, 480);

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Pose{Rotation(n(rng), n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))};
}

std::vector<Correspondence2D3D> scene(std::mt19937_64& rng, const Pose& T, int n, double outliers) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Pose world_from_cam = inverse(T);
  std::vector<Correspondence2D3D> out;
  for (int i = 0; i < n; ++i) {
    Pixel px(u(rng) * 639.0, u(rng) * 479.0);
    Correspondence2D3D c;
    c.point = world_from_cam.apply(backproject(kK, px, 1.0 + 9.0 * u(rng)));
    c.pixel = u(rng) < outliers ? Pixel(u(rng) * 639.0, u(rng) * 479.0) : px + Pixel(noise(rng), noise(rng));
    c.query_idx = i;
    c.landmark_id = i;
    out.push_back(c);
  }
  return out;
}

DescriptorMatrix unit_rows(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<float> g(0.0F, 1.0F);
  DescriptorMatrix d(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) d(i, j) = g(rng);
    d.row(i).normalize();
  }
  return d;
}

void BM_P3P(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto corrs = scene(rng, random_pose(rng), 3, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_p3p(corrs, kK));
}
BENCHMARK(BM_P3P);

void BM_RansacPnP(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto corrs = scene(rng, random_pose(rng), static_cast<int>(state.range(0)), 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(ransac_pnp(corrs, kK));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RansacPnP)->Arg(200)->Arg(1000);

void BM_MutualNN(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const int n = static_cast<int>(state.range(0));
  const DescriptorMatrix a = unit_rows(rng, n, 128);
  const DescriptorMatrix b = unit_rows(rng, n, 128);
  for (auto _ : state) benchmark::DoNotOptimize(match_mutual_nn(a, b));
}
BENCHMARK(BM_MutualNN)->Arg(500)->Arg(2000);

void BM_Fuse(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 1000;
  std::vector<Keypoint> kq;
  std::vector<Keypoint> km;
  for (int i = 0; i < n; ++i) {
    kq.push_back({static_cast<float>(u(rng) * 639.0), static_cast<float>(u(rng) * 479.0), 1.0F});
    km.push_back({static_cast<float>(u(rng) * 639.0), static_cast<float>(u(rng) * 479.0), 1.0F});
  }
  std::vector<MatchSet> sets;
  for (const char* tag : {"a", "b", "c"}) {
    MatchSet ms{"q", "m", {}};
    for (int i = 0; i < n; ++i) {
      if (u(rng) < 0.7) ms.matches.push_back({i, i, static_cast<float>(u(rng)), tag});
    }
    sets.push_back(normalize_confidences(std::move(ms)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fuse_matches(sets, kq, km));
}
BENCHMARK(BM_Fuse);

void BM_RetrievalTopK(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const int n = static_cast<int>(state.range(0));
  const DescriptorMatrix g = unit_rows(rng, n + 1, 256);
  std::vector<MapFrame> frames(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    frames[static_cast<std::size_t>(i)].frame_id = "f" + std::to_string(i);
    frames[static_cast<std::size_t>(i)].features.global = g.row(i).transpose();
  }
  const RetrievalIndex index = index_build(frames);
  const GlobalDescriptor q = g.row(n).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(index.query_topk(q, 100));
}
BENCHMARK(BM_RetrievalTopK)->Arg(1000)->Arg(10000);

}  // namespace
}  // namespace xloc

BENCHMARK_MAIN();
