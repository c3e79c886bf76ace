#include "tma/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tma {

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw ContractError("base_lr must be positive");
    if (momentum < 0.0 || weight_decay < 0.0) throw ContractError("rates must be nonnegative");
    if (poly_power <= 0.0) throw ContractError("poly_power must be positive");
    if (total_iters <= 0 || batch_size <= 0) throw ContractError("iteration/batch counts must be positive");
}

double poly_lr(double base_lr, int iter, int total_iters, double power) {
    if (iter < 0 || iter > total_iters)
        throw ContractError("poly_lr iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(total_iters) + "]");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / total_iters, power);
}

void sgd_step(std::vector<Parameter>& params, SgdState& state, double lr, double momentum,
              double weight_decay) {
    for (Parameter& p : params) {
        auto it = state.velocity.find(p.name);
        if (it == state.velocity.end())
            it = state.velocity.emplace(p.name, Tensor::zeros(p.value.shape)).first;
        Tensor& v = it->second;
        if (!v.same_shape(p.value))
            throw ShapeError("velocity shape " + shape_str(v.shape) + " != parameter shape " +
                             shape_str(p.value.shape));
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            v.data[i] = momentum * v.data[i] + p.grad.data[i] + weight_decay * p.value.data[i];
            p.value.data[i] -= lr * v.data[i];
        }
    }
}

StepStats train_step(TMANet& model, const std::vector<VideoClip>& batch, SgdState& state,
                     const TrainConfig& cfg) {
    if (batch.empty()) throw ContractError("train_step batch is empty");
    Tape tape;
    VarId total = -1;
    StepStats stats;
    for (const VideoClip& clip : batch) {
        ForwardResult fwd = model.forward(tape, clip.memory, clip.query);
        VarId main_ce = cross_entropy(tape, fwd.main_logits, clip.label);
        VarId aux_ce = cross_entropy(tape, fwd.aux_logits, clip.label);
        stats.main_loss += tape.value(main_ce).data[0];
        stats.aux_loss += tape.value(aux_ce).data[0];
        VarId clip_loss = add(tape, main_ce, scale(tape, aux_ce, cfg.aux_weight));
        total = (total < 0) ? clip_loss : add(tape, total, clip_loss);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    total = scale(tape, total, inv_b);
    stats.main_loss *= inv_b;
    stats.aux_loss *= inv_b;
    stats.total_loss = tape.value(total).data[0];

    tape.backward(total);
    stats.lr = poly_lr(cfg.base_lr, state.iteration, cfg.total_iters, cfg.poly_power);
    sgd_step(model.params(), state, stats.lr, cfg.momentum, cfg.weight_decay);
    model.zero_grad();
    ++state.iteration;
    return stats;
}

std::string format_log_line(int iter, const StepStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d\t%.6g\t%.6g\t%.6g\t%.6g\n", iter, s.lr, s.total_loss, s.main_loss,
                  s.aux_loss);
    return buf;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void run_training(TMANet& model, SgdState& state, const TrainConfig& cfg, const Dataset& dataset,
                  std::ostream& log, int stop_after) {
    cfg.validate();
    if (dataset.empty()) throw ContractError("training dataset is empty");
    const int t = model.config().memory_length;
    const int stop = stop_after < 0 ? cfg.total_iters : std::min(stop_after, cfg.total_iters);
    while (state.iteration < stop) {
        const int iter = state.iteration;
        // per-iteration RNG keeps resumed runs bitwise identical
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iter) + 1));
        std::vector<VideoClip> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::size_t pick = static_cast<std::size_t>(rng() % dataset.size());
            VideoClip clip = make_clip(dataset[pick], t, cfg.sampler, rng);
            if (cfg.augment) clip = augment(clip, cfg.augment_params, rng);
            batch.push_back(std::move(clip));
        }
        StepStats stats = train_step(model, batch, state, cfg);
        log << format_log_line(iter, stats);
    }
}

}  // namespace tma
