#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "varcf/data.hpp"
#include "varcf/model.hpp"

namespace varcf {

inline constexpr int kCheckpointVersion = 1;

/// Trained model plus what is needed to score raw ids: config, parameters and the
/// corpus id maps.
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::string dataset;
    double threshold = 0.0;
    IdIndex users;
    IdIndex items;
};

nlohmann::ordered_json config_to_json(const ModelConfig& config);
// Missing keys keep the values already in `base`.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

// JSON text; doubles are written in shortest round-trip form so reload is bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace varcf
