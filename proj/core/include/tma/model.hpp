#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tma/autodiff.hpp"
#include "tma/tensor.hpp"

namespace tma {

enum class Aggregation { kConcat, kSum };
enum class AttentionScaling { kNone, kInvSqrtCk };
enum class EncoderVariant { kConv1x1Then3x3, kConv1x1Only, kConv3x3Only };

struct ModelConfig {
    int memory_length = 2;    // T; 0 degenerates to the per-frame baseline
    int key_channels = 8;     // C_K
    int value_channels = 32;  // C_V, 4 * C_K by default
    int num_classes = 4;
    std::vector<int> backbone_widths = {8, 16, 32};
    std::vector<int> backbone_strides = {2, 2, 4};  // stride 4 = two stride-2 convs
    Aggregation aggregation = Aggregation::kConcat;
    AttentionScaling attention_scaling = AttentionScaling::kNone;
    EncoderVariant encoder = EncoderVariant::kConv1x1Then3x3;
    double aux_loss_weight = 0.4;

    int output_stride() const;
    void validate() const;
};

/// Key/value features of the memory frames and the query frame,
/// all at backbone feature resolution h x w.
struct EncodedFeatures {
    std::vector<VarId> memory_keys;    // T tensors C_K x h x w
    std::vector<VarId> memory_values;  // T tensors C_V x h x w
    VarId query_key = -1;              // C_K x h x w
    VarId query_value = -1;            // C_V x h x w
};

struct ForwardResult {
    VarId main_logits = -1;  // C x H x W
    VarId aux_logits = -1;   // C x H x W
    std::optional<VarId> attention;  // N x M row-stochastic map, absent when T == 0
};

/// TMANet: shared conv backbone, four encoding layers, temporal memory
/// attention over all T*h*w memory positions, feature aggregation, and
/// segmentation + auxiliary heads.
class TMANet {
public:
    explicit TMANet(ModelConfig cfg, std::uint64_t seed = 0);

    /// memory.size() must equal cfg.memory_length.
    ForwardResult forward(Tape& tape, const std::vector<Tensor>& memory, const Tensor& query);

    /// Backbone over one frame. Returns the top feature; low_feat (the
    /// penultimate stage output, the aux-loss tap) is written if requested.
    VarId backbone_forward(Tape& tape, VarId frame, VarId* low_feat = nullptr);

    EncodedFeatures encode(Tape& tape, const std::vector<VarId>& memory_feats, VarId query_feat);

    /// Attention readout (C_V x h x w) plus the attention map S (N x M).
    std::pair<VarId, VarId> temporal_memory_attention(Tape& tape, const EncodedFeatures& enc);

    VarId aggregate_features(Tape& tape, VarId readout, VarId query_value);

    VarId segmentation_head(Tape& tape, VarId feat, int out_h, int out_w);
    VarId aux_head(Tape& tape, VarId low_feat, int out_h, int out_w);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    Parameter* find_param(const std::string& name);
    void zero_grad();

private:
    struct Conv {
        int kernel_param;  // index into params_
        int bias_param;
        int stride;
        int pad;
    };
    struct Encoder {
        std::vector<Conv> convs;
    };

    Conv make_conv(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad,
                   std::uint64_t& rng_state);
    Encoder make_encoder(const std::string& name, int in_ch, int out_ch, std::uint64_t& rng_state);
    VarId apply_conv(Tape& tape, const Conv& c, VarId x);
    VarId apply_encoder(Tape& tape, const Encoder& e, VarId x);

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<std::vector<Conv>> backbone_stages_;
    Encoder enc_memory_key_, enc_memory_value_, enc_query_key_, enc_query_value_;
    Conv seg_head_, aux_head_;
};

}  // namespace tma
