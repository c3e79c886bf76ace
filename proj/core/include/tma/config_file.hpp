#pragma once

#include <string>
#include <vector>

#include "tma/model.hpp"
#include "tma/train.hpp"

namespace tma {

/// Merged model + training configuration. Parsed from flat `key = value`
/// text files (`#` starts a comment); unknown keys are rejected and every
/// key has a default.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    /// Applies one `key = value` assignment.
    void set(const std::string& key, const std::string& value);

    /// Effective config, one key per line, reusable as an input file.
    std::string to_text() const;
};

RunConfig parse_config_text(const std::string& text, const RunConfig& defaults = {});
RunConfig parse_config_file(const std::string& path, const RunConfig& defaults = {});

}  // namespace tma
