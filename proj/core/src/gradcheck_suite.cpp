#include "tma/gradcheck_suite.hpp"

#include <cmath>

namespace tma {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor random_tensor(std::vector<int> shape, std::uint64_t& state, double amp = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data)
        v = amp * (2.0 * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53) - 1.0);
    return t;
}

// Reduces any tensor to a scalar through fixed random weights so the check
// sees a non-degenerate output gradient.
VarId weighted_sum(Tape& t, VarId v, std::uint64_t weight_seed) {
    const std::size_t n = t.value(v).numel();
    std::uint64_t st = weight_seed;
    Tensor w = random_tensor({static_cast<int>(n), 1}, st);
    VarId flat = reshape(t, v, {1, static_cast<int>(n)});
    return reshape(t, matmul(t, flat, t.constant(w)), {1});
}

double check_over_seeds(const TapeFn& f, const std::function<std::vector<Tensor>(std::uint64_t&)>& gen) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::uint64_t st = seed * 0x100000001b3ULL;
        worst = std::max(worst, grad_check(f, gen(st)));
    }
    return worst;
}

}  // namespace

std::vector<std::pair<std::string, double>> op_gradcheck_suite() {
    std::vector<std::pair<std::string, double>> report;

    report.emplace_back("matmul", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, matmul(t, in[0], in[1]), 11);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({3, 4}, st), random_tensor({4, 2}, st)};
        }));

    report.emplace_back("conv2d_k3_s1", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, conv2d(t, in[0], in[1], in[2], 1, 1), 12);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({2, 4, 4}, st), random_tensor({3, 2, 3, 3}, st),
                                       random_tensor({3}, st)};
        }));

    report.emplace_back("conv2d_k3_s2", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, conv2d(t, in[0], in[1], in[2], 2, 1), 13);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({2, 6, 6}, st), random_tensor({2, 2, 3, 3}, st),
                                       random_tensor({2}, st)};
        }));

    report.emplace_back("conv2d_k1", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, conv2d(t, in[0], in[1], in[2], 1, 0), 14);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({3, 4, 4}, st), random_tensor({2, 3, 1, 1}, st),
                                       random_tensor({2}, st)};
        }));

    report.emplace_back("softmax_rows", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, softmax_rows(t, in[0]), 15);
        },
        [](std::uint64_t& st) { return std::vector<Tensor>{random_tensor({4, 6}, st, 2.0)}; }));

    report.emplace_back("concat_channels", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, concat_channels(t, in[0], in[1]), 16);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({2, 3, 3}, st), random_tensor({3, 3, 3}, st)};
        }));

    report.emplace_back("reshape_permute", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, reshape_permute(t, in[0], {2, 0, 1}, {12, 2}), 17);
        },
        [](std::uint64_t& st) { return std::vector<Tensor>{random_tensor({2, 3, 4}, st)}; }));

    report.emplace_back("relu", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) { return weighted_sum(t, relu(t, in[0]), 18); },
        [](std::uint64_t& st) { return std::vector<Tensor>{random_tensor({5, 7}, st)}; }));

    report.emplace_back("upsample_bilinear", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            return weighted_sum(t, upsample_bilinear(t, in[0], 7, 9), 19);
        },
        [](std::uint64_t& st) { return std::vector<Tensor>{random_tensor({2, 3, 4}, st)}; }));

    report.emplace_back("cross_entropy", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            static const std::vector<std::uint8_t> labels = {0, 1, 2, 255, 1, 0, 2, 1, 0};
            return cross_entropy(t, in[0], labels);
        },
        [](std::uint64_t& st) { return std::vector<Tensor>{random_tensor({3, 3, 3}, st, 2.0)}; }));

    report.emplace_back("conv_relu_cross_entropy", check_over_seeds(
        [](Tape& t, const std::vector<VarId>& in) {
            static const std::vector<std::uint8_t> labels = {0, 1, 1, 0, 1, 0, 0, 1, 255, 0, 1, 0, 1, 1, 0, 0};
            VarId y = relu(t, conv2d(t, in[0], in[1], in[2], 1, 1));
            VarId logits = conv2d(t, y, in[3], in[4], 1, 0);
            return cross_entropy(t, logits, labels);
        },
        [](std::uint64_t& st) {
            return std::vector<Tensor>{random_tensor({1, 4, 4}, st), random_tensor({3, 1, 3, 3}, st),
                                       random_tensor({3}, st), random_tensor({2, 3, 1, 1}, st),
                                       random_tensor({2}, st)};
        }));

    return report;
}

ModelConfig tiny_gradcheck_config() {
    ModelConfig cfg;
    cfg.memory_length = 2;
    cfg.key_channels = 4;
    cfg.value_channels = 16;
    cfg.num_classes = 3;
    cfg.backbone_widths = {4, 8};
    cfg.backbone_strides = {2, 2};
    return cfg;
}

VideoClip tiny_gradcheck_clip() {
    std::uint64_t st = 0xc11f;
    VideoClip clip;
    clip.height = 16;
    clip.width = 16;
    clip.memory.push_back(random_tensor({3, 16, 16}, st, 0.5));
    clip.memory.push_back(random_tensor({3, 16, 16}, st, 0.5));
    clip.query = random_tensor({3, 16, 16}, st, 0.5);
    clip.label.resize(16 * 16);
    for (std::size_t i = 0; i < clip.label.size(); ++i)
        clip.label[i] = static_cast<std::uint8_t>(splitmix64(st) % 3);
    clip.label[0] = 255;
    return clip;
}

namespace {

double clip_loss(TMANet& model, const VideoClip& clip, Tape& tape) {
    ForwardResult fwd = model.forward(tape, clip.memory, clip.query);
    VarId main_ce = cross_entropy(tape, fwd.main_logits, clip.label);
    VarId aux_ce = cross_entropy(tape, fwd.aux_logits, clip.label);
    VarId total = add(tape, main_ce, scale(tape, aux_ce, model.config().aux_loss_weight));
    return tape.value(total).data[0];
}

double clip_loss_and_backward(TMANet& model, const VideoClip& clip) {
    Tape tape;
    ForwardResult fwd = model.forward(tape, clip.memory, clip.query);
    VarId main_ce = cross_entropy(tape, fwd.main_logits, clip.label);
    VarId aux_ce = cross_entropy(tape, fwd.aux_logits, clip.label);
    VarId total = add(tape, main_ce, scale(tape, aux_ce, model.config().aux_loss_weight));
    tape.backward(total);
    return tape.value(total).data[0];
}

}  // namespace

double model_grad_check(TMANet& model, const VideoClip& clip, double eps) {
    model.zero_grad();
    clip_loss_and_backward(model, clip);

    double worst = 0.0;
    for (Parameter& p : model.params()) {
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double keep = p.value.data[i];
            p.value.data[i] = keep + eps;
            Tape tp;
            const double fp = clip_loss(model, clip, tp);
            p.value.data[i] = keep - eps;
            Tape tm;
            const double fm = clip_loss(model, clip, tm);
            p.value.data[i] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err = std::abs(p.grad.data[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    model.zero_grad();
    return worst;
}

}  // namespace tma
