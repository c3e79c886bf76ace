#include <benchmark/benchmark.h>

#include <random>

#include "tma/autodiff.hpp"
#include "tma/model.hpp"
#include "tma/train.hpp"

namespace {

tma::Tensor random_frame(int h, int w, std::uint64_t seed) {
    tma::Tensor t = tma::Tensor::zeros({3, h, w});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : t.data) v = dist(rng);
    return t;
}

tma::ModelConfig bench_config(int memory_length) {
    tma::ModelConfig cfg;
    cfg.memory_length = memory_length;
    cfg.key_channels = 8;
    cfg.value_channels = 32;
    cfg.num_classes = 4;
    cfg.backbone_widths = {8, 16, 32};
    cfg.backbone_strides = {2, 2, 2};
    return cfg;
}

void BM_Conv2d3x3(benchmark::State& state) {
    const int hw = static_cast<int>(state.range(0));
    tma::Tensor input = random_frame(hw, hw, 1);
    tma::Tensor kernel = tma::Tensor::zeros({16, 3, 3, 3});
    tma::Tensor bias = tma::Tensor::zeros({16});
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for (double& v : kernel.data) v = dist(rng);

    for (auto _ : state) {
        tma::Tape tape;
        tma::VarId x = tape.constant(input);
        tma::VarId k = tape.constant(kernel);
        tma::VarId b = tape.constant(bias);
        tma::VarId y = tma::conv2d(tape, x, k, b, 1, 1);
        benchmark::DoNotOptimize(tape.value(y).data.data());
    }
}
BENCHMARK(BM_Conv2d3x3)->Arg(32)->Arg(64);

void BM_AttentionForward(benchmark::State& state) {
    const int t = static_cast<int>(state.range(0));
    tma::TMANet model(bench_config(t), 7);
    std::vector<tma::Tensor> memory;
    for (int i = 0; i < t; ++i) memory.push_back(random_frame(32, 32, 10 + static_cast<std::uint64_t>(i)));
    tma::Tensor query = random_frame(32, 32, 99);

    for (auto _ : state) {
        tma::Tape tape;
        tma::ForwardResult fwd = model.forward(tape, memory, query);
        benchmark::DoNotOptimize(tape.value(fwd.main_logits).data.data());
    }
}
BENCHMARK(BM_AttentionForward)->Arg(1)->Arg(2)->Arg(4);

void BM_TrainStep(benchmark::State& state) {
    tma::TMANet model(bench_config(2), 7);
    tma::VideoClip clip;
    clip.height = clip.width = 32;
    clip.memory = {random_frame(32, 32, 1), random_frame(32, 32, 2)};
    clip.query = random_frame(32, 32, 3);
    clip.label.assign(32 * 32, 0);
    std::mt19937_64 rng(4);
    for (auto& l : clip.label) l = static_cast<std::uint8_t>(rng() % 4);

    tma::TrainConfig cfg;
    cfg.total_iters = 1 << 30;
    cfg.batch_size = 1;
    tma::SgdState sgd;
    std::vector<tma::VideoClip> batch = {clip};
    for (auto _ : state) {
        tma::StepStats stats = tma::train_step(model, batch, sgd, cfg);
        benchmark::DoNotOptimize(stats.total_loss);
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
