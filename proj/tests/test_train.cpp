#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tma/train.hpp"

using namespace tma;

namespace {

ModelConfig tiny_cfg(int t = 1) {
    ModelConfig cfg;
    cfg.memory_length = t;
    cfg.key_channels = 2;
    cfg.value_channels = 8;
    cfg.num_classes = 3;
    cfg.backbone_widths = {4, 6};
    cfg.backbone_strides = {2, 2};
    return cfg;
}

Dataset tiny_dataset(int clips) {
    Dataset ds;
    for (int i = 0; i < clips; ++i) {
        SyntheticSceneSpec spec;
        spec.num_objects = 1;
        spec.num_classes = 3;
        spec.seed = 100 + static_cast<std::uint64_t>(i);
        LabeledVideo v = generate_video(spec, 12, 16, 16, 11);
        StoredClip c;
        c.height = c.width = 16;
        for (int f = 6; f < 11; ++f) c.history.push_back(v.frames[static_cast<std::size_t>(f)]);
        c.query = v.frames[11];
        c.label = v.labels[11];
        ds.push_back(std::move(c));
    }
    return ds;
}

}  // namespace

TEST_CASE("poly_lr closed form") {
    CHECK(poly_lr(0.01, 0, 80000, 0.9) == 0.01);
    CHECK(poly_lr(0.01, 80000, 80000, 0.9) == 0.0);
    // 0.01 * 0.5^0.9
    CHECK(std::abs(poly_lr(0.01, 40000, 80000, 0.9) - 0.01 * std::pow(0.5, 0.9)) < 1e-15);
    CHECK(poly_lr(0.01, 40000, 80000, 0.9) == doctest::Approx(0.0053589).epsilon(1e-4));
    CHECK_THROWS_AS(poly_lr(0.01, 81000, 80000, 0.9), ContractError);
}

TEST_CASE("poly_lr is strictly decreasing and matches the closed form to 1e-15") {
    double prev = poly_lr(0.01, 0, 500, 0.9);
    for (int it = 1; it <= 500; ++it) {
        const double lr = poly_lr(0.01, it, 500, 0.9);
        CHECK(lr < prev);
        CHECK(std::abs(lr - 0.01 * std::pow(1.0 - it / 500.0, 0.9)) < 1e-15);
        prev = lr;
    }
}

TEST_CASE("sgd_step hand-evaluated values") {
    // zero grad, zero wd, zero velocity: fixed point
    {
        std::vector<Parameter> params;
        params.emplace_back("w", Tensor({1}, {1.0}));
        SgdState st;
        sgd_step(params, st, 0.1, 0.9, 0.0);
        CHECK(params[0].value.data[0] == 1.0);
    }
    // single step, no momentum: w = 1 - 0.1*0.5 = 0.95
    {
        std::vector<Parameter> params;
        params.emplace_back("w", Tensor({1}, {1.0}));
        params[0].grad.data[0] = 0.5;
        SgdState st;
        sgd_step(params, st, 0.1, 0.0, 0.0);
        CHECK(params[0].value.data[0] == doctest::Approx(0.95).epsilon(1e-15));
    }
    // two identical-gradient steps with momentum 0.9: w = 0.855
    {
        std::vector<Parameter> params;
        params.emplace_back("w", Tensor({1}, {1.0}));
        SgdState st;
        params[0].grad.data[0] = 0.5;
        sgd_step(params, st, 0.1, 0.9, 0.0);
        params[0].grad.data[0] = 0.5;
        sgd_step(params, st, 0.1, 0.9, 0.0);
        CHECK(params[0].value.data[0] == doctest::Approx(0.855).epsilon(1e-12));
    }
}

TEST_CASE("lr = 0 leaves parameters bitwise unchanged") {
    TMANet model(tiny_cfg(), 1);
    std::vector<Tensor> before;
    for (const Parameter& p : model.params()) before.push_back(p.value);
    SgdState st;
    for (int i = 0; i < 5; ++i) {
        for (Parameter& p : model.params())
            for (double& g : p.grad.data) g = 0.37;
        sgd_step(model.params(), st, 0.0, 0.9, 5e-4);
    }
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params()[i].value.data == before[i].data);
}

TEST_CASE("weight decay with zero loss gradient shrinks parameter magnitude monotonically") {
    std::vector<Parameter> params;
    params.emplace_back("w", Tensor({2}, {1.0, -2.0}));
    SgdState st;
    double prev = std::abs(params[0].value.data[0]) + std::abs(params[0].value.data[1]);
    for (int i = 0; i < 20; ++i) {
        sgd_step(params, st, 0.1, 0.0, 0.1);
        const double mag = std::abs(params[0].value.data[0]) + std::abs(params[0].value.data[1]);
        CHECK(mag < prev);
        prev = mag;
    }
}

TEST_CASE("train_step: aux_weight 0 makes total equal main exactly") {
    TMANet model(tiny_cfg(), 2);
    Dataset ds = tiny_dataset(2);
    std::mt19937_64 rng(1);
    std::vector<VideoClip> batch = {make_clip(ds[0], 1, SamplerMode::kContinuous, rng)};
    TrainConfig cfg;
    cfg.aux_weight = 0.0;
    SgdState st;
    StepStats s = train_step(model, batch, st, cfg);
    CHECK(s.total_loss == s.main_loss);
    CHECK(st.iteration == 1);
}

TEST_CASE("train_step rejects an empty batch") {
    TMANet model(tiny_cfg(), 2);
    SgdState st;
    TrainConfig cfg;
    CHECK_THROWS_AS(train_step(model, {}, st, cfg), ContractError);
}

TEST_CASE("training is deterministic: identical seeds give bitwise-identical traces") {
    Dataset ds = tiny_dataset(3);
    TrainConfig cfg;
    cfg.total_iters = 8;
    cfg.batch_size = 2;
    cfg.seed = 42;

    auto run = [&]() {
        TMANet model(tiny_cfg(), cfg.seed);
        SgdState st;
        std::ostringstream log;
        run_training(model, st, cfg, ds, log);
        std::vector<std::vector<double>> params;
        for (const Parameter& p : model.params()) params.push_back(p.value.data);
        return std::make_pair(log.str(), params);
    };
    auto [log_a, params_a] = run();
    auto [log_b, params_b] = run();
    CHECK(log_a == log_b);
    CHECK(params_a == params_b);
    CHECK(log_a.find('\t') != std::string::npos);
}

TEST_CASE("metrics log format: tab-separated, one line per iteration") {
    StepStats s;
    s.lr = 0.01;
    s.total_loss = 1.3862943;
    s.main_loss = 1.0;
    s.aux_loss = 0.9657357;
    const std::string line = format_log_line(7, s);
    CHECK(line == "7\t0.01\t1.38629\t1\t0.965736\n");
}

TEST_CASE("run_training with total_iters=1 emits one log line") {
    Dataset ds = tiny_dataset(1);
    TrainConfig cfg;
    cfg.total_iters = 1;
    cfg.batch_size = 1;
    TMANet model(tiny_cfg(), 5);
    SgdState st;
    std::ostringstream log;
    run_training(model, st, cfg, ds, log);
    const std::string text = log.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
    CHECK(st.iteration == 1);
}

TEST_CASE("loss decreases when overfitting a single clip") {
    Dataset ds = tiny_dataset(1);
    TrainConfig cfg;
    cfg.total_iters = 40;
    cfg.batch_size = 1;
    cfg.base_lr = 0.05;
    TMANet model(tiny_cfg(), 6);
    SgdState st;
    std::ostringstream log;
    run_training(model, st, cfg, ds, log);
    std::istringstream lines(log.str());
    std::string first, last, cur;
    while (std::getline(lines, cur)) {
        if (first.empty()) first = cur;
        last = cur;
    }
    auto loss_of = [](const std::string& line) {
        std::istringstream is(line);
        std::string iter, lr, total;
        is >> iter >> lr >> total;
        return std::stod(total);
    };
    CHECK(loss_of(last) < loss_of(first));
}
