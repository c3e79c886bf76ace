#include "tma/gradcheck.hpp"

#include <cmath>

namespace tma {

namespace {

double eval_scalar(const TapeFn& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<VarId> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& in : inputs) leaves.push_back(tape.constant(in));
    VarId out = f(tape, leaves);
    if (tape.value(out).numel() != 1) throw ContractError("grad_check requires a scalar-valued function");
    return tape.value(out).data[0];
}

}  // namespace

double grad_check(const TapeFn& f, std::vector<Tensor> inputs, double eps) {
    for (const Tensor& in : inputs)
        if (in.numel() > 200) throw ContractError("grad_check inputs limited to 200 elements");

    // analytic pass
    Tape tape;
    std::vector<VarId> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& in : inputs) leaves.push_back(tape.constant(in));
    VarId out = f(tape, leaves);
    if (tape.value(out).numel() != 1) throw ContractError("grad_check requires a scalar-valued function");
    tape.backward(out);

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& analytic = tape.grad(leaves[i]);
        for (std::size_t j = 0; j < inputs[i].data.size(); ++j) {
            const double keep = inputs[i].data[j];
            inputs[i].data[j] = keep + eps;
            const double fp = eval_scalar(f, inputs);
            inputs[i].data[j] = keep - eps;
            const double fm = eval_scalar(f, inputs);
            inputs[i].data[j] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err = std::abs(analytic.data[j] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace tma
