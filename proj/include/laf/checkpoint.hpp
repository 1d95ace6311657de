#pragma once

#include <string>

#include "json.hpp"
#include "laf/train.hpp"

namespace laf {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Binary container: magic, u32 version, u64 metadata length, UTF-8 JSON
// metadata (configs, train record, array directory), then the named weight
// arrays as little-endian f32 in directory order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace laf
