#include "tma/config_file.hpp"

#include <fstream>
#include <sstream>

namespace tma {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ContractError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    try {
        if (key == "memory_length") model.memory_length = std::stoi(value);
        else if (key == "key_channels") model.key_channels = std::stoi(value);
        else if (key == "value_channels") model.value_channels = std::stoi(value);
        else if (key == "num_classes") model.num_classes = std::stoi(value);
        else if (key == "backbone_widths") model.backbone_widths = parse_int_list(value);
        else if (key == "backbone_strides") model.backbone_strides = parse_int_list(value);
        else if (key == "aggregation") {
            if (value == "concat") model.aggregation = Aggregation::kConcat;
            else if (value == "sum") model.aggregation = Aggregation::kSum;
            else throw ContractError("aggregation must be concat or sum, got '" + value + "'");
        } else if (key == "attention_scaling") {
            if (value == "none") model.attention_scaling = AttentionScaling::kNone;
            else if (value == "inv_sqrt_ck") model.attention_scaling = AttentionScaling::kInvSqrtCk;
            else throw ContractError("attention_scaling must be none or inv_sqrt_ck, got '" + value + "'");
        } else if (key == "encoder") {
            if (value == "1x1_3x3") model.encoder = EncoderVariant::kConv1x1Then3x3;
            else if (value == "1x1") model.encoder = EncoderVariant::kConv1x1Only;
            else if (value == "3x3") model.encoder = EncoderVariant::kConv3x3Only;
            else throw ContractError("encoder must be 1x1_3x3, 1x1, or 3x3, got '" + value + "'");
        } else if (key == "aux_weight") {
            model.aux_loss_weight = std::stod(value);
            train.aux_weight = model.aux_loss_weight;
        } else if (key == "base_lr") train.base_lr = std::stod(value);
        else if (key == "momentum") train.momentum = std::stod(value);
        else if (key == "weight_decay") train.weight_decay = std::stod(value);
        else if (key == "total_iters") train.total_iters = std::stoi(value);
        else if (key == "poly_power") train.poly_power = std::stod(value);
        else if (key == "batch_size") train.batch_size = std::stoi(value);
        else if (key == "seed") train.seed = std::stoull(value);
        else if (key == "sampler") {
            if (value == "continuous") train.sampler = SamplerMode::kContinuous;
            else if (value == "random") train.sampler = SamplerMode::kRandom;
            else throw ContractError("sampler must be continuous or random, got '" + value + "'");
        } else if (key == "augment") train.augment = parse_bool(value, key);
        else if (key == "aug_min_ratio") train.augment_params.min_ratio = std::stod(value);
        else if (key == "aug_max_ratio") train.augment_params.max_ratio = std::stod(value);
        else if (key == "crop") train.augment_params.crop = std::stoi(value);
        else if (key == "hflip_prob") train.augment_params.hflip_prob = std::stod(value);
        else throw ContractError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ContractError("config key '" + key + "': cannot parse value '" + value + "'");
    } catch (const std::out_of_range&) {
        throw ContractError("config key '" + key + "': value '" + value + "' out of range");
    }
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "memory_length = " << model.memory_length << "\n";
    os << "key_channels = " << model.key_channels << "\n";
    os << "value_channels = " << model.value_channels << "\n";
    os << "num_classes = " << model.num_classes << "\n";
    os << "backbone_widths = " << join_ints(model.backbone_widths) << "\n";
    os << "backbone_strides = " << join_ints(model.backbone_strides) << "\n";
    os << "aggregation = " << (model.aggregation == Aggregation::kConcat ? "concat" : "sum") << "\n";
    os << "attention_scaling = "
       << (model.attention_scaling == AttentionScaling::kNone ? "none" : "inv_sqrt_ck") << "\n";
    os << "encoder = "
       << (model.encoder == EncoderVariant::kConv1x1Then3x3
               ? "1x1_3x3"
               : (model.encoder == EncoderVariant::kConv1x1Only ? "1x1" : "3x3"))
       << "\n";
    os << "aux_weight = " << train.aux_weight << "\n";
    os << "base_lr = " << train.base_lr << "\n";
    os << "momentum = " << train.momentum << "\n";
    os << "weight_decay = " << train.weight_decay << "\n";
    os << "total_iters = " << train.total_iters << "\n";
    os << "poly_power = " << train.poly_power << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "seed = " << train.seed << "\n";
    os << "sampler = " << (train.sampler == SamplerMode::kContinuous ? "continuous" : "random") << "\n";
    os << "augment = " << (train.augment ? "true" : "false") << "\n";
    os << "aug_min_ratio = " << train.augment_params.min_ratio << "\n";
    os << "aug_max_ratio = " << train.augment_params.max_ratio << "\n";
    os << "crop = " << train.augment_params.crop << "\n";
    os << "hflip_prob = " << train.augment_params.hflip_prob << "\n";
    return os.str();
}

RunConfig parse_config_text(const std::string& text, const RunConfig& defaults) {
    RunConfig cfg = defaults;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path, const RunConfig& defaults) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), defaults);
}

}  // namespace tma
