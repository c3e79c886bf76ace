#include "tma/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace tma {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw IoError("truncated checkpoint: " + path);
    return v;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 8));
}

std::pair<std::string, Tensor> read_entry(std::istream& is, const std::string& path) {
    const std::uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(is, path);
    std::vector<int> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is, path));
    Tensor t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 8));
    if (!is) throw IoError("truncated checkpoint: " + path);
    return {std::move(name), std::move(t)};
}

Tensor config_tensor(const ModelConfig& c) {
    std::vector<double> v = {
        static_cast<double>(c.memory_length),
        static_cast<double>(c.key_channels),
        static_cast<double>(c.value_channels),
        static_cast<double>(c.num_classes),
        static_cast<double>(static_cast<int>(c.aggregation)),
        static_cast<double>(static_cast<int>(c.attention_scaling)),
        static_cast<double>(static_cast<int>(c.encoder)),
        c.aux_loss_weight,
        static_cast<double>(c.backbone_widths.size()),
    };
    for (std::size_t i = 0; i < c.backbone_widths.size(); ++i) {
        v.push_back(static_cast<double>(c.backbone_widths[i]));
        v.push_back(static_cast<double>(c.backbone_strides[i]));
    }
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

ModelConfig config_from_tensor(const Tensor& t, const std::string& path) {
    const std::vector<double>& v = t.data;
    if (v.size() < 9) throw IoError("malformed __config entry: " + path);
    ModelConfig c;
    c.memory_length = static_cast<int>(v[0]);
    c.key_channels = static_cast<int>(v[1]);
    c.value_channels = static_cast<int>(v[2]);
    c.num_classes = static_cast<int>(v[3]);
    c.aggregation = static_cast<Aggregation>(static_cast<int>(v[4]));
    c.attention_scaling = static_cast<AttentionScaling>(static_cast<int>(v[5]));
    c.encoder = static_cast<EncoderVariant>(static_cast<int>(v[6]));
    c.aux_loss_weight = v[7];
    const int n_stages = static_cast<int>(v[8]);
    if (v.size() != 9 + 2 * static_cast<std::size_t>(n_stages))
        throw IoError("malformed __config entry: " + path);
    c.backbone_widths.clear();
    c.backbone_strides.clear();
    for (int i = 0; i < n_stages; ++i) {
        c.backbone_widths.push_back(static_cast<int>(v[9 + 2 * static_cast<std::size_t>(i)]));
        c.backbone_strides.push_back(static_cast<int>(v[10 + 2 * static_cast<std::size_t>(i)]));
    }
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const TMANet& model, const SgdState* state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    std::uint32_t count = 1 + static_cast<std::uint32_t>(model.params().size());
    if (state) count += 1 + static_cast<std::uint32_t>(state->velocity.size());
    os.write("TMAC", 4);
    write_u32(os, 1);
    write_u32(os, count);
    write_entry(os, "__config", config_tensor(model.config()));
    for (const Parameter& p : model.params()) write_entry(os, p.name, p.value);
    if (state) {
        write_entry(os, "__state", Tensor({1}, {static_cast<double>(state->iteration)}));
        // sorted for a deterministic byte layout
        std::map<std::string, const Tensor*> ordered;
        for (const auto& [name, vel] : state->velocity) ordered.emplace(name, &vel);
        for (const auto& [name, vel] : ordered) write_entry(os, "__vel." + name, *vel);
    }
    if (!os) throw IoError("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TMAC", 4) != 0) throw IoError("not a TMAC checkpoint: " + path);
    if (read_u32(is, path) != 1) throw IoError("unsupported TMAC version: " + path);
    const std::uint32_t count = read_u32(is, path);
    if (count == 0) throw IoError("empty checkpoint: " + path);

    auto [first_name, first] = read_entry(is, path);
    if (first_name != "__config") throw IoError("checkpoint must start with __config: " + path);
    LoadedCheckpoint out;
    out.model = std::make_unique<TMANet>(config_from_tensor(first, path));

    for (std::uint32_t i = 1; i < count; ++i) {
        auto [name, t] = read_entry(is, path);
        if (name == "__state") {
            out.state.iteration = static_cast<int>(t.data[0]);
            out.has_state = true;
        } else if (name.rfind("__vel.", 0) == 0) {
            out.state.velocity.emplace(name.substr(6), std::move(t));
            out.has_state = true;
        } else {
            Parameter* p = out.model->find_param(name);
            if (!p) throw IoError("unknown parameter '" + name + "' in " + path);
            if (p->value.shape != t.shape)
                throw IoError("shape mismatch for '" + name + "' in " + path + ": expected " +
                              shape_str(p->value.shape) + ", got " + shape_str(t.shape));
            p->value = std::move(t);
        }
    }
    return out;
}

}  // namespace tma
