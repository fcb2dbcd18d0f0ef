// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "vicmae/corpus.hpp"
#include "vicmae/losses.hpp"
#include "vicmae/network.hpp"
#include "vicmae/trainer.hpp"

using namespace vicmae;

namespace {

Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Multi-head attention forward and backward; range(0) = sequence length.
void BM_Attention(benchmark::State& state) {
  const int seq = static_cast<int>(state.range(0));
  const int batch = 16;
  const int width = 64;
  const Matrix qkv = noise(batch * seq, 3 * width, 1);
  const Matrix uniform = Matrix::Constant(batch, width, 1.0 / width);
  for (auto _ : state) {
    ag::Graph g;
    const ag::Var x = g.input(qkv);
    const ag::Var y = ag::attention(x, batch, seq, 4);
    g.backward(ag::softmax_cross_entropy(ag::mean_pool(y, batch, seq, 0), uniform));
    benchmark::DoNotOptimize(g.grad(x).data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Attention)->Arg(17)->Arg(65)->Unit(benchmark::kMicrosecond);

void BM_InfoNce(benchmark::State& state) {
  const auto n = state.range(0);
  Matrix p = noise(n, 128, 2);
  Matrix z = noise(n, 128, 3);
  p.rowwise().normalize();
  z.rowwise().normalize();
  for (auto _ : state) benchmark::DoNotOptimize(info_nce(p, z, 0.1));
}
BENCHMARK(BM_InfoNce)->Arg(64)->Arg(256);

// Unmasked encoder forward over a batch of tiny-config images.
void BM_EncodeTiny(benchmark::State& state) {
  Model m = init_model(ModelConfig::tiny(), 0);
  const int batch = 32;
  TokenBatch tb;
  tb.batch = batch;
  tb.length = m.cfg.patch.num_tokens();
  tb.tokens = noise(batch * tb.length, m.cfg.token_dim(), 4);
  for (auto _ : state) {
    ag::Graph g;
    g.set_grad_enabled(false);
    benchmark::DoNotOptimize(encode(g, m, tb).tokens.value().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_EncodeTiny)->Unit(benchmark::kMillisecond);

// One full pretraining step (mask, encode, decode, project, losses, AdamW).
void BM_TrainStepTiny(benchmark::State& state) {
  SynthSpec s;
  s.num_videos = 32;
  s.num_images = 8;
  s.frames_per_video = 4;
  s.canvas = 32;
  s.patch_size = 4;
  std::vector<ViewPair> batch;
  TrainConfig c;
  c.optim.batch_size = static_cast<int>(state.range(0));
  {
    const auto dir = std::filesystem::temp_directory_path() / "vicmae_bench_corpus";
    const Manifest m = generate_synthetic(s, dir);
    batch = build_batch(m, c.optim.batch_size, c.image_ratio, c.sampling, c.augment, 32, 5);
    std::filesystem::remove_all(dir);
  }
  RunState run = init_run(c);
  std::uint64_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(run, batch, c, 0.025, 1e-4, ++k).report.total);
  state.SetItemsProcessed(state.iterations() * c.optim.batch_size);
}
BENCHMARK(BM_TrainStepTiny)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
