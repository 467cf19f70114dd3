#include <benchmark/benchmark.h>

#include "subdyn/inference_f32.hpp"

using namespace subdyn;

namespace {

// untrained weights are fine for timing: cost depends only on shapes
MlpF32 make_net(int in, std::vector<int> hidden, int out, bool bn) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.hidden = std::move(hidden);
  spec.output_dim = out;
  spec.residual = bn;
  spec.batchnorm = bn;
  return make_f32(spec, init_weights(spec, 7));
}

}  // namespace

static void IntegratorForward(benchmark::State& state) {
  MlpF32 net = make_net(17, {64, 64}, 4, false);
  Eigen::VectorXf q = Eigen::VectorXf::Random(17);
  for (auto _ : state) {
    Eigen::VectorXf out = net.apply(q);
    benchmark::DoNotOptimize(out[0]);
  }
}
BENCHMARK(IntegratorForward);

static void DecoderForward(benchmark::State& state) {
  MlpF32 net = make_net(4, {64, 64, 50}, static_cast<int>(state.range(0)), true);
  Eigen::VectorXf z = Eigen::VectorXf::Random(4);
  for (auto _ : state) {
    Eigen::VectorXf out = net.apply(z);
    benchmark::DoNotOptimize(out[0]);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(DecoderForward)->Arg(192)->Arg(570)->Arg(975);

static void DecoderJvp(benchmark::State& state) {
  MlpF32 net = make_net(4, {64, 64, 50}, static_cast<int>(state.range(0)), true);
  Eigen::VectorXf z = Eigen::VectorXf::Random(4);
  Eigen::VectorXf seed = Eigen::VectorXf::Zero(net.output_dim);
  seed.head(3).setOnes();
  for (auto _ : state) {
    MlpF32::Trace trace;
    Eigen::VectorXf out = net.apply_traced(z, trace);
    Eigen::VectorXf g = net.vjp(trace, seed);
    benchmark::DoNotOptimize(g[0]);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(DecoderJvp)->Arg(192)->Arg(570)->Arg(975);

static void MlpTrainStep(benchmark::State& state) {
  MlpSpec spec{192, {50, 64, 64}, 4, true, true};
  MlpWeights w = init_weights(spec, 3);
  MatX x = MatX::Random(192, 128);
  for (auto _ : state) {
    MlpCache cache;
    MatX y = forward(spec, w, x, PassMode::Train, &cache);
    MlpGrads grads = zero_grads_like(w);
    backward(spec, w, cache, y, grads);
    benchmark::DoNotOptimize(grads.dense_w[0](0, 0));
  }
}
BENCHMARK(MlpTrainStep);

BENCHMARK_MAIN();
