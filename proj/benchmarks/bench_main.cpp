#include <benchmark/benchmark.h>

#include "spikesplit/arch.hpp"
#include "spikesplit/layers.hpp"
#include "spikesplit/network.hpp"
#include "spikesplit/random.hpp"
#include "spikesplit/spike.hpp"
#include "spikesplit/wire.hpp"

namespace spikesplit {
namespace {

Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed, double density = -1) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (auto& v : t.values()) v = density < 0 ? rng.uniform() : (rng.uniform() < density ? 1.0 : 0.0);
  return t;
}

// Args: channels, spatial size. T = 2, B = 1, 3x3 kernel.
void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  ConvSpec spec;
  spec.in_channels = spec.out_channels = c;
  spec.kh = spec.kw = 3;
  spec.ph = spec.pw = 1;
  Conv2d conv("bench", spec);
  Rng rng(1);
  conv.init(rng);
  const Tensor x = random_tensor({2, 1, c, hw, hw}, 2, 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * spec.macs({c, hw, hw})));
}
BENCHMARK(BM_Conv3x3)->Args({16, 32})->Args({64, 16})->Args({256, 8});

void BM_Depthwise3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  ConvSpec spec;
  spec.in_channels = spec.out_channels = c;
  spec.kh = spec.kw = 3;
  spec.ph = spec.pw = 1;
  spec.depthwise = true;
  Conv2d conv("bench", spec);
  Rng rng(1);
  conv.init(rng);
  const Tensor x = random_tensor({2, 1, c, 16, 16}, 2, 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_Depthwise3x3)->Arg(64)->Arg(512);

void BM_LifForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({2, 1, n, 8, 8}, 3);
  const LifParams lif;
  for (auto _ : state) benchmark::DoNotOptimize(lif_forward(x, lif));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * x.numel()));
}
BENCHMARK(BM_LifForward)->Arg(64)->Arg(1024);

void BM_Pack(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({2, 1, n, 8, 8}, 4, 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(SpikeTensor::pack(x));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * SpikeTensor::packed_bytes({2, 1, n, 8, 8})));
}
BENCHMARK(BM_Pack)->Arg(8)->Arg(256);

void BM_Unpack(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const SpikeTensor s = SpikeTensor::pack(random_tensor({2, 1, n, 8, 8}, 4, 0.2));
  for (auto _ : state) benchmark::DoNotOptimize(s.unpack());
}
BENCHMARK(BM_Unpack)->Arg(8)->Arg(256);

void BM_SerializeRoundTrip(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const SpikeTensor s = SpikeTensor::pack(random_tensor({2, 1, n, 4, 4}, 5, 0.2));
  const SpikeFrame frame = SpikeFrame::from_spikes(1, 16, s);
  for (auto _ : state) {
    const auto bytes = serialize(frame);
    benchmark::DoNotOptimize(deserialize(bytes));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * serialize(frame).size()));
}
BENCHMARK(BM_SerializeRoundTrip)->Arg(8)->Arg(2048);

void BM_EdgeHalf(benchmark::State& state) {
  const ArchitectureSpec arch = build_arch("resnet50");
  const Model model = Model::build(arch, 1);
  const Tensor image = random_tensor({1, arch.input.c, arch.input.h, arch.input.w}, 6);
  const auto split = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(model.run_edge(image, 2, split));
}
BENCHMARK(BM_EdgeHalf)->Arg(1)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace spikesplit

BENCHMARK_MAIN();
