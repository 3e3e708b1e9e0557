// GEMM kernels (serial vs OpenMP) and decoding throughput.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sbi/kernels.hpp"
#include "sbi/search.hpp"
#include "sbi/training.hpp"

namespace {

std::vector<float> random_matrix(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 1), b = random_matrix(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) sbi::kernels::omp::gemm_nn(n, n, n, a.data(), b.data(), c.data());
    else sbi::kernels::serial::gemm_nn(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 2 * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(64, 512);

template <bool Parallel>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 3), b = random_matrix(n * n, 4);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) sbi::kernels::omp::gemm_nt(n, n, n, a.data(), b.data(), c.data());
    else sbi::kernels::serial::gemm_nt(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 2 * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_GemmNT<false>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_GemmNT<true>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(64, 512);

// Untrained desk Transformer; output lengths are fixed by max_len so both
// searches generate the same number of tokens.
struct DecodeFixture {
  std::unique_ptr<sbi::models::Seq2SeqModel<float>> model;
  std::vector<std::vector<sbi::data::TokenId>> sources;

  DecodeFixture() {
    sbi::train::ModelSpec spec;
    spec.transformer.vocab_size = 22;
    model = sbi::train::make_model<float>(spec);
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> tok(6, 21);
    for (int s = 0; s < 8; ++s) {
      std::vector<sbi::data::TokenId> src(10);
      for (auto& t : src) t = tok(rng);
      sources.push_back(src);
    }
  }
};

void BM_Decode(benchmark::State& state) {
  static DecodeFixture fx;
  const bool sync = state.range(0) == 1;
  sbi::search::BeamConfig cfg;
  cfg.beam = 4;
  cfg.max_len = 20;
  std::int64_t tokens = 0;
  for (auto _ : state) {
    for (const auto& src : fx.sources) {
      auto scorer = fx.model->scorer(src, sync);
      const auto r = sync ? sbi::search::sync_bidi_beam_search(*scorer, cfg)
                          : sbi::search::unidirectional_beam_search(*scorer, sbi::search::Direction::kL2R, cfg);
      tokens += static_cast<std::int64_t>(r.tokens.size()) + 1;
    }
  }
  state.counters["tokens_per_s"] = benchmark::Counter(static_cast<double>(tokens), benchmark::Counter::kIsRate);
  state.SetLabel(sync ? "sync-bidirectional" : "unidirectional");
}
BENCHMARK(BM_Decode)->Name("decode/beam4")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
