#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

using VarId = int;

/// Reverse-mode tape. Ops append nodes during the forward pass; backward()
/// replays them in exact reverse execution order. Parameter leaves accumulate
/// (+=) into Parameter::grad.
class Tape {
public:
    VarId constant(Tensor value);
    VarId leaf(Parameter& p);

    const Tensor& value(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& grad(VarId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    /// root must be scalar (numel == 1).
    void backward(VarId root);

    // Used by op implementations.
    VarId push(Tensor value, std::function<void(Tape&, VarId)> back);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, VarId)> back;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

// Differentiable ops. All take and return tape handles.
VarId matmul(Tape& t, VarId a, VarId b);
VarId im2col(Tape& t, VarId input, int k, int stride, int pad);
VarId conv2d(Tape& t, VarId input, VarId kernel, VarId bias, int stride, int pad);
VarId softmax_rows(Tape& t, VarId logits);
VarId concat_channels(Tape& t, VarId a, VarId b);
VarId stack_frames(Tape& t, const std::vector<VarId>& frames);
VarId permute(Tape& t, VarId v, const std::vector<int>& order);
VarId reshape(Tape& t, VarId v, const std::vector<int>& new_shape);
VarId reshape_permute(Tape& t, VarId v, const std::vector<int>& order, const std::vector<int>& new_shape);
VarId relu(Tape& t, VarId v);
VarId upsample_bilinear(Tape& t, VarId v, int out_h, int out_w);
VarId cross_entropy(Tape& t, VarId logits, const std::vector<std::uint8_t>& labels, int ignore_index = 255);
VarId add(Tape& t, VarId a, VarId b);
VarId scale(Tape& t, VarId v, double c);
VarId add_row_bias(Tape& t, VarId m, VarId bias);
VarId sum_all(Tape& t, VarId v);

/// Output spatial extent of a convolution along one axis.
int conv_out_extent(int in, int k, int stride, int pad);

// Plain (non-taped) kernels shared by forward and backward passes.
void matmul_raw(const double* a, int p, int q, const double* b, int r, double* out);

}  // namespace tma
