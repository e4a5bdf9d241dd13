#include <benchmark/benchmark.h>

#include "bhvit/bitpack.hpp"

using namespace bhvit;

namespace {

void BM_XnorGemm(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(7);
  const BitMatrix a = pack(Tensor::rand_sign({n, n}, rng));
  const BitMatrix bt = pack(Tensor::rand_sign({n, n}, rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(xnor_gemm_nt(a, bt));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void BM_FloatGemm(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(7);
  const Tensor a = Tensor::rand_sign({n, n}, rng);
  const Tensor b = Tensor::rand_sign({n, n}, rng);
  Tensor out({n, n});
  for (auto _ : state) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        float s = 0;
        for (int64_t k = 0; k < n; ++k) s += a.at2(i, k) * b.at2(j, k);
        out.at2(i, j) = s;
      }
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

}  // namespace

BENCHMARK(BM_XnorGemm)->Arg(64)->Arg(128)->Arg(256)->Arg(512);
BENCHMARK(BM_FloatGemm)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

BENCHMARK_MAIN();
