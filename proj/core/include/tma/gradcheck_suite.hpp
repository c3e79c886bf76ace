#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tma/data.hpp"
#include "tma/gradcheck.hpp"
#include "tma/model.hpp"

namespace tma {

/// Per-op finite-difference checks over random small inputs (5 seeds each).
/// Returns (op name, max relative error) pairs.
std::vector<std::pair<std::string, double>> op_gradcheck_suite();

/// Central-difference check of the full training loss against the tape
/// gradients, over every model parameter. Returns the max relative error.
double model_grad_check(TMANet& model, const VideoClip& clip, double eps = 1e-5);

/// The tiny end-to-end configuration used by `tma gradcheck` and the
/// acceptance suite: T=2, C_K=4, 3x16x16 frames.
ModelConfig tiny_gradcheck_config();
VideoClip tiny_gradcheck_clip();

}  // namespace tma
