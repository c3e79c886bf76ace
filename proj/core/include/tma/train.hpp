#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tma/data.hpp"
#include "tma/model.hpp"

namespace tma {

struct TrainConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int total_iters = 500;
    double poly_power = 0.9;
    int batch_size = 2;
    double aux_weight = 0.4;
    std::uint64_t seed = 0;
    SamplerMode sampler = SamplerMode::kContinuous;
    bool augment = false;
    AugmentParams augment_params;

    void validate() const;
};

/// base_lr * (1 - iter/total_iters)^power.
double poly_lr(double base_lr, int iter, int total_iters, double power);

struct SgdState {
    std::unordered_map<std::string, Tensor> velocity;
    int iteration = 0;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(std::vector<Parameter>& params, SgdState& state, double lr, double momentum,
              double weight_decay);

struct StepStats {
    double lr = 0.0;
    double total_loss = 0.0;
    double main_loss = 0.0;
    double aux_loss = 0.0;
};

/// One optimizer step over a batch: total = mean(main + aux_weight * aux),
/// backward, sgd_step at the poly LR for the current iteration, zero grads.
StepStats train_step(TMANet& model, const std::vector<VideoClip>& batch, SgdState& state,
                     const TrainConfig& cfg);

/// Tab-separated, 6 significant digits: iter lr total_loss main_loss aux_loss.
std::string format_log_line(int iter, const StepStats& s);

/// Full loop: per-iteration clip sampling (and optional augmentation) from the
/// dataset, one train_step per iteration, one log line per iteration. Stops at
/// cfg.total_iters; resumes from state.iteration. A nonnegative stop_after
/// interrupts the run early at that iteration (the LR schedule still spans
/// cfg.total_iters, so a checkpointed run resumes bitwise).
void run_training(TMANet& model, SgdState& state, const TrainConfig& cfg, const Dataset& dataset,
                  std::ostream& log, int stop_after = -1);

}  // namespace tma
