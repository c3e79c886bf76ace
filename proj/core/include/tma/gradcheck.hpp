#pragma once

#include <functional>
#include <vector>

#include "tma/autodiff.hpp"

namespace tma {

/// Scalar-valued tensor function built on a fresh tape from leaf handles.
using TapeFn = std::function<VarId(Tape&, const std::vector<VarId>&)>;

/// Compares tape gradients of f against central differences.
/// Returns max |analytic - numeric| / max(1, |numeric|) over all input elements.
double grad_check(const TapeFn& f, std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace tma
