#include "tma/model.hpp"

#include <cmath>

namespace tma {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform_symmetric(std::uint64_t& state, double bound) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;  // [0,1)
    return bound * (2.0 * u - 1.0);
}

}  // namespace

int ModelConfig::output_stride() const {
    int os = 1;
    for (int s : backbone_strides) os *= s;
    return os;
}

void ModelConfig::validate() const {
    if (memory_length < 0) throw ContractError("memory_length must be >= 0");
    if (key_channels <= 0 || value_channels <= 0) throw ContractError("channel counts must be positive");
    if (num_classes <= 0) throw ContractError("num_classes must be positive");
    if (backbone_widths.size() < 2) throw ContractError("backbone needs at least two stages (aux tap)");
    if (backbone_widths.size() != backbone_strides.size())
        throw ContractError("backbone_widths and backbone_strides must have equal length");
    for (int s : backbone_strides)
        if (s != 1 && s != 2 && s != 4) throw ContractError("stage strides must be 1, 2, or 4");
    if (aux_loss_weight < 0.0) throw ContractError("aux_loss_weight must be nonnegative");
}

TMANet::TMANet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::uint64_t rng = seed ^ 0x7f4a7c15ULL;

    int in_ch = 3;
    for (std::size_t i = 0; i < cfg_.backbone_widths.size(); ++i) {
        const int w = cfg_.backbone_widths[i];
        const int s = cfg_.backbone_strides[i];
        std::vector<Conv> stage;
        const std::string base = "backbone." + std::to_string(i);
        if (s == 4) {
            stage.push_back(make_conv(base + ".conv0", in_ch, w, 3, 2, 1, rng));
            stage.push_back(make_conv(base + ".conv1", w, w, 3, 2, 1, rng));
        } else {
            stage.push_back(make_conv(base + ".conv0", in_ch, w, 3, s, 1, rng));
        }
        backbone_stages_.push_back(std::move(stage));
        in_ch = w;
    }

    const int top = cfg_.backbone_widths.back();
    enc_memory_key_ = make_encoder("enc.memory_key", top, cfg_.key_channels, rng);
    enc_memory_value_ = make_encoder("enc.memory_value", top, cfg_.value_channels, rng);
    enc_query_key_ = make_encoder("enc.query_key", top, cfg_.key_channels, rng);
    enc_query_value_ = make_encoder("enc.query_value", top, cfg_.value_channels, rng);

    int head_in = cfg_.value_channels;
    if (cfg_.memory_length > 0 && cfg_.aggregation == Aggregation::kConcat) head_in = 2 * cfg_.value_channels;
    seg_head_ = make_conv("head.seg", head_in, cfg_.num_classes, 1, 1, 0, rng);

    const int low_ch = cfg_.backbone_widths[cfg_.backbone_widths.size() - 2];
    aux_head_ = make_conv("head.aux", low_ch, cfg_.num_classes, 1, 1, 0, rng);
}

TMANet::Conv TMANet::make_conv(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad,
                               std::uint64_t& rng_state) {
    Tensor kernel = Tensor::zeros({out_ch, in_ch, k, k});
    const double bound = std::sqrt(6.0 / (in_ch * k * k));
    for (double& v : kernel.data) v = uniform_symmetric(rng_state, bound);
    params_.emplace_back(name + ".kernel", std::move(kernel));
    const int kernel_idx = static_cast<int>(params_.size() - 1);
    params_.emplace_back(name + ".bias", Tensor::zeros({out_ch}));
    const int bias_idx = static_cast<int>(params_.size() - 1);
    return Conv{kernel_idx, bias_idx, stride, pad};
}

TMANet::Encoder TMANet::make_encoder(const std::string& name, int in_ch, int out_ch,
                                     std::uint64_t& rng_state) {
    Encoder e;
    switch (cfg_.encoder) {
        case EncoderVariant::kConv1x1Then3x3:
            e.convs.push_back(make_conv(name + ".conv0", in_ch, out_ch, 1, 1, 0, rng_state));
            e.convs.push_back(make_conv(name + ".conv1", out_ch, out_ch, 3, 1, 1, rng_state));
            break;
        case EncoderVariant::kConv1x1Only:
            e.convs.push_back(make_conv(name + ".conv0", in_ch, out_ch, 1, 1, 0, rng_state));
            break;
        case EncoderVariant::kConv3x3Only:
            e.convs.push_back(make_conv(name + ".conv0", in_ch, out_ch, 3, 1, 1, rng_state));
            break;
    }
    return e;
}

VarId TMANet::apply_conv(Tape& tape, const Conv& c, VarId x) {
    VarId k = tape.leaf(params_[static_cast<std::size_t>(c.kernel_param)]);
    VarId b = tape.leaf(params_[static_cast<std::size_t>(c.bias_param)]);
    return conv2d(tape, x, k, b, c.stride, c.pad);
}

VarId TMANet::apply_encoder(Tape& tape, const Encoder& e, VarId x) {
    VarId out = apply_conv(tape, e.convs[0], x);
    for (std::size_t i = 1; i < e.convs.size(); ++i) {
        out = relu(tape, out);
        out = apply_conv(tape, e.convs[i], out);
    }
    return out;
}

VarId TMANet::backbone_forward(Tape& tape, VarId frame, VarId* low_feat) {
    const Tensor& f = tape.value(frame);
    if (f.rank() != 3 || f.shape[0] != 3)
        throw ShapeError("backbone expects a 3 x H x W frame, got " + shape_str(f.shape));
    const int os = cfg_.output_stride();
    if (f.shape[1] % os != 0 || f.shape[2] % os != 0)
        throw ShapeError("frame extents " + shape_str(f.shape) + " not divisible by output stride " +
                         std::to_string(os));
    VarId x = frame;
    VarId low = -1;
    for (std::size_t i = 0; i < backbone_stages_.size(); ++i) {
        for (const Conv& c : backbone_stages_[i]) {
            x = apply_conv(tape, c, x);
            x = relu(tape, x);
        }
        if (i + 2 == backbone_stages_.size()) low = x;
    }
    if (low_feat) *low_feat = low;
    return x;
}

EncodedFeatures TMANet::encode(Tape& tape, const std::vector<VarId>& memory_feats, VarId query_feat) {
    EncodedFeatures enc;
    for (VarId mf : memory_feats) {
        enc.memory_keys.push_back(apply_encoder(tape, enc_memory_key_, mf));
        enc.memory_values.push_back(apply_encoder(tape, enc_memory_value_, mf));
    }
    enc.query_key = apply_encoder(tape, enc_query_key_, query_feat);
    enc.query_value = apply_encoder(tape, enc_query_value_, query_feat);
    return enc;
}

std::pair<VarId, VarId> TMANet::temporal_memory_attention(Tape& tape, const EncodedFeatures& enc) {
    const int t = static_cast<int>(enc.memory_keys.size());
    if (t == 0) throw ContractError("temporal_memory_attention requires T >= 1 (use the baseline path)");
    const Tensor& qk = tape.value(enc.query_key);
    const int ck = qk.shape[0], h = qk.shape[1], w = qk.shape[2];
    const int cv = tape.value(enc.query_value).shape[0];
    const int n = h * w;      // query pixels
    const int m = t * h * w;  // memory pixels

    // M_K: T x C_K x h x w -> C_K x M; M_V: -> M x C_V
    VarId mk = stack_frames(tape, enc.memory_keys);
    mk = reshape_permute(tape, mk, {1, 0, 2, 3}, {ck, m});
    VarId mv = stack_frames(tape, enc.memory_values);
    mv = reshape_permute(tape, mv, {0, 2, 3, 1}, {m, cv});
    // Q_K: C_K x h x w -> N x C_K
    VarId qkm = reshape_permute(tape, enc.query_key, {1, 2, 0}, {n, ck});

    VarId logits = matmul(tape, qkm, mk);
    if (cfg_.attention_scaling == AttentionScaling::kInvSqrtCk)
        logits = scale(tape, logits, 1.0 / std::sqrt(static_cast<double>(ck)));
    VarId s = softmax_rows(tape, logits);

    VarId readout = matmul(tape, s, mv);  // N x C_V
    readout = reshape_permute(tape, reshape(tape, readout, {h, w, cv}), {2, 0, 1}, {cv, h, w});
    return {readout, s};
}

VarId TMANet::aggregate_features(Tape& tape, VarId readout, VarId query_value) {
    if (cfg_.aggregation == Aggregation::kConcat) return concat_channels(tape, readout, query_value);
    return add(tape, readout, query_value);
}

VarId TMANet::segmentation_head(Tape& tape, VarId feat, int out_h, int out_w) {
    return upsample_bilinear(tape, apply_conv(tape, seg_head_, feat), out_h, out_w);
}

VarId TMANet::aux_head(Tape& tape, VarId low_feat, int out_h, int out_w) {
    return upsample_bilinear(tape, apply_conv(tape, aux_head_, low_feat), out_h, out_w);
}

ForwardResult TMANet::forward(Tape& tape, const std::vector<Tensor>& memory, const Tensor& query) {
    if (static_cast<int>(memory.size()) != cfg_.memory_length)
        throw ContractError("clip has " + std::to_string(memory.size()) + " memory frames, config wants " +
                            std::to_string(cfg_.memory_length));
    for (const Tensor& mf : memory)
        if (!mf.same_shape(query))
            throw ShapeError("memory frame shape " + shape_str(mf.shape) + " != query shape " +
                             shape_str(query.shape));
    const int in_h = query.shape[1], in_w = query.shape[2];

    VarId low = -1;
    VarId query_feat = backbone_forward(tape, tape.constant(query), &low);
    std::vector<VarId> memory_feats;
    memory_feats.reserve(memory.size());
    for (const Tensor& mf : memory) memory_feats.push_back(backbone_forward(tape, tape.constant(mf)));

    EncodedFeatures enc = encode(tape, memory_feats, query_feat);

    ForwardResult out;
    VarId feat;
    if (cfg_.memory_length > 0) {
        auto [readout, s] = temporal_memory_attention(tape, enc);
        feat = aggregate_features(tape, readout, enc.query_value);
        out.attention = s;
    } else {
        feat = enc.query_value;  // baseline FCN path, attention never executed
    }
    out.main_logits = segmentation_head(tape, feat, in_h, in_w);
    out.aux_logits = aux_head(tape, low, in_h, in_w);
    return out;
}

Parameter* TMANet::find_param(const std::string& name) {
    for (Parameter& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void TMANet::zero_grad() {
    for (Parameter& p : params_) p.zero_grad();
}

}  // namespace tma
