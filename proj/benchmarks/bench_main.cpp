#include <benchmark/benchmark.h>

#include "cberl/classify.hpp"
#include "cberl/context.hpp"
#include "cberl/fusion.hpp"
#include "cberl/graph.hpp"

using namespace cberl;

static void BM_FocalLoss(benchmark::State& state) {
  Rng rng(1);
  const int n = static_cast<int>(state.range(0));
  Mat P(n, 7);
  for (int i = 0; i < n; ++i) {
    Vec raw = rng.gaussian_vec(7);
    Vec e = (raw.array() - raw.maxCoeff()).exp();
    P.row(i) = (e / e.sum()).transpose();
  }
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.uniform_int(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify::focal_loss(P, y, 3.0, 0.0));
  }
}
BENCHMARK(BM_FocalLoss)->Arg(256)->Arg(2048);

static void BM_BilstmForward(benchmark::State& state) {
  Rng rng(2);
  ad::ParamSet ps;
  context::ContextEncoder enc(ps, 8, 16, rng);
  Mat seq = rng.gaussian_mat(8, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto out = context::bilstm_forward(enc, seq);
    benchmark::DoNotOptimize(out.l.sum());
  }
}
BENCHMARK(BM_BilstmForward)->Arg(10)->Arg(40);

static void BM_GraphForwardBackward(benchmark::State& state) {
  Rng rng(3);
  const int n = static_cast<int>(state.range(0));
  Mat feats = rng.gaussian_mat(32, n);
  std::vector<int> speakers(n);
  for (int i = 0; i < n; ++i) speakers[i] = rng.uniform_int(2);
  auto g = graph::build_graph(feats, speakers, {4, 4});
  ad::ParamSet ps;
  graph::GnnModel model(ps, 32, {.width = 16, .attn_hidden = 16}, rng);
  auto mask = graph::apply_mask(g, 0.3, 1);
  for (auto _ : state) {
    ad::Tape tape;
    auto fw = model.forward_expr(tape, g, mask, tape.input(feats));
    ps.zero_grad();
    tape.backward(fw.recon_loss);
    benchmark::DoNotOptimize(fw.recon_loss.scalar());
  }
}
BENCHMARK(BM_GraphForwardBackward)->Arg(10)->Arg(30);

static void BM_DjvaeBatch(benchmark::State& state) {
  Rng rng(4);
  CorpusDims dims{16, 16, 32};
  fusion::FusionModel model(dims, {}, 5);
  std::vector<Utterance> batch;
  for (int i = 0; i < 64; ++i) {
    Utterance u;
    u.text = {rng.gaussian_vec(16), Modality::kText};
    u.audio = {rng.gaussian_vec(16), Modality::kAudio};
    u.visual = {rng.gaussian_vec(32), Modality::kVisual};
    batch.push_back(u);
  }
  std::vector<const Utterance*> ptrs;
  for (auto& u : batch) ptrs.push_back(&u);
  for (auto _ : state) {
    ad::Tape tape;
    Rng noise(9);
    auto le = model.loss_expr(tape, ptrs, noise);
    model.params().zero_grad();
    tape.backward(le.total);
    benchmark::DoNotOptimize(le.total.scalar());
  }
}
BENCHMARK(BM_DjvaeBatch);

BENCHMARK_MAIN();
