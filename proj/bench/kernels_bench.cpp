// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

// Kernel and end-to-end timings. Each kernel runs three ways: the serial
// reference, the optimized kernel pinned to one thread, and the optimized
// kernel with every OpenMP thread.

#include <omp.h>

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "unidiff/corpus.hpp"
#include "unidiff/kernels.hpp"
#include "unidiff/model.hpp"
#include "unidiff/sampler.hpp"

using namespace unidiff;

namespace {

enum Mode { kRef = 0, kSerial = 1, kParallel = 2 };

std::vector<float> random_vector(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

struct Threads {
  int saved = omp_get_max_threads();
  explicit Threads(Mode m) { omp_set_num_threads(m == kParallel ? saved : 1); }
  ~Threads() { omp_set_num_threads(saved); }
};

void set_label(benchmark::State& state) {
  static const char* names[] = {"ref", "serial", "openmp"};
  state.SetLabel(names[state.range(0)]);
}

void BM_Matmul(benchmark::State& state) {
  const auto mode = static_cast<Mode>(state.range(0));
  const int m = static_cast<int>(state.range(1)), k = 128, n = 512;
  const auto a = random_vector(static_cast<std::size_t>(m) * k, 1);
  const auto w = random_vector(static_cast<std::size_t>(k) * n, 2);
  const auto b = random_vector(static_cast<std::size_t>(n), 3);
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  Threads t(mode);
  for (auto _ : state) {
    if (mode == kRef) {
      kernels::ref::matmul(a.data(), m, k, w.data(), n, b.data(), out.data());
    } else {
      kernels::matmul(a.data(), m, k, w.data(), n, b.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m) * k * n);
  set_label(state);
}
BENCHMARK(BM_Matmul)->ArgsProduct({{kRef, kSerial, kParallel}, {16, 128}});

void BM_Attention(benchmark::State& state) {
  const auto mode = static_cast<Mode>(state.range(0));
  const int n = static_cast<int>(state.range(1)), d = 128, heads = 4;
  const auto q = random_vector(static_cast<std::size_t>(n) * d, 4);
  const auto k = random_vector(static_cast<std::size_t>(n) * d, 5);
  const auto v = random_vector(static_cast<std::size_t>(n) * d, 6);
  std::vector<float> out(static_cast<std::size_t>(n) * d), probs(static_cast<std::size_t>(heads) * n * n);
  Threads t(mode);
  for (auto _ : state) {
    if (mode == kRef) {
      kernels::ref::attention(q.data(), n, k.data(), v.data(), n, d, heads, out.data());
    } else {
      kernels::attention(q.data(), n, k.data(), v.data(), n, d, heads, out.data(), probs.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  set_label(state);
}
BENCHMARK(BM_Attention)->ArgsProduct({{kRef, kSerial, kParallel}, {96, 256}});

void BM_LayerNorm(benchmark::State& state) {
  const auto mode = static_cast<Mode>(state.range(0));
  const int m = 256, d = 128;
  const auto x = random_vector(static_cast<std::size_t>(m) * d, 7);
  const std::vector<float> gamma(d, 1.0f), beta(d, 0.0f);
  std::vector<float> out(x.size()), xhat(x.size()), rstd(static_cast<std::size_t>(m));
  Threads t(mode);
  for (auto _ : state) {
    if (mode == kRef) {
      kernels::ref::layernorm(x.data(), m, d, gamma.data(), beta.data(), out.data());
    } else {
      kernels::layernorm(x.data(), m, d, gamma.data(), beta.data(), out.data(), xhat.data(), rstd.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  set_label(state);
}
BENCHMARK(BM_LayerNorm)->Arg(kRef)->Arg(kSerial)->Arg(kParallel);

void BM_Gelu(benchmark::State& state) {
  const auto mode = static_cast<Mode>(state.range(0));
  const auto x = random_vector(1 << 16, 8);
  std::vector<float> out(x.size());
  Threads t(mode);
  for (auto _ : state) {
    if (mode == kRef) {
      kernels::ref::gelu(x.data(), x.size(), out.data());
    } else {
      kernels::gelu_forward(x.data(), x.size(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
  set_label(state);
}
BENCHMARK(BM_Gelu)->Arg(kRef)->Arg(kSerial)->Arg(kParallel);

// Whole-network timings on the toy configuration.
struct Toy {
  Corpus corpus{Vocabulary(), {}};
  Model<float> model;
  std::vector<TokenId> caption;
  Toy() : model([&] {
            ModelConfig c = default_model_config(corpus.vocab());
            c.d_model = 64;
            c.n_layers = 3;
            c.d_ff = 256;
            c.max_len = 128;
            return c;
          }(), 1),
          caption(corpus.generate_sample(1).caption) {}
};

void BM_Generate(benchmark::State& state) {
  static Toy toy;
  SamplerConfig cfg;
  cfg.steps = 16;
  cfg.cfg_scale = 2.0;
  if (state.range(0) > 0) cfg.cache = {0.5, 0.25, 4};
  long computed = 0;
  for (auto _ : state) {
    const Trajectory t = generate_image(toy.model, toy.caption, cfg, toy.corpus.vocab());
    computed = t.computed_masked;
    benchmark::DoNotOptimize(t.grid.cells.data());
  }
  state.counters["computed_masked"] = static_cast<double>(computed);
  state.SetLabel(state.range(0) > 0 ? "cache 0.5/0.25/4" : "no cache");
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
