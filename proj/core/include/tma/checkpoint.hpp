#pragma once

#include <memory>
#include <string>

#include "tma/model.hpp"
#include "tma/train.hpp"

namespace tma {

// TMAC checkpoint format (bit-exact): magic "TMAC", u32 version=1,
// u32 parameter count; per parameter: u32 name length, UTF-8 name, u32 rank,
// u32 dims[rank], little-endian f64 data.
//
// The first entry is the pseudo-parameter "__config", a flat vector holding
// the ModelConfig scalars in this fixed order:
//   [memory_length, key_channels, value_channels, num_classes,
//    aggregation (0=concat, 1=sum), attention_scaling (0=none, 1=inv_sqrt_ck),
//    encoder (0=1x1+3x3, 1=1x1, 2=3x3), aux_loss_weight, n_stages,
//    width_0, stride_0, ..., width_{n-1}, stride_{n-1}]
//
// Optional training-state entries ("__state" = [iteration], "__vel.<param>" =
// momentum velocity) follow the model parameters when a checkpoint is written
// mid-training; loaders that only need the model skip them.

void save_checkpoint(const std::string& path, const TMANet& model, const SgdState* state = nullptr);

struct LoadedCheckpoint {
    std::unique_ptr<TMANet> model;
    SgdState state;     // empty velocities if the file carries no training state
    bool has_state = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tma
