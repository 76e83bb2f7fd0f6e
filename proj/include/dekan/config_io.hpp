#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dekan/model.hpp"

namespace dekan {

struct TrainConfig;

/// Flat `key = value` lines (a TOML subset): `#` comments, optional double
/// quotes around strings, `[a, b]` integer lists, dotted keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Canonical text of a model config; parse_model_config inverts it exactly.
std::string model_config_text(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

/// Applies one setting; model.* and augment.* keys address nested fields.
/// Unknown keys and malformed values throw ConfigError.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace dekan
