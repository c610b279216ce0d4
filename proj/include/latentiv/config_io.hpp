#pragma once

#include <json.hpp>

#include "latentiv/datagen.hpp"
#include "latentiv/estimate.hpp"
#include "latentiv/factor.hpp"

// JSON views of the configuration structs. apply_json overlays only the keys
// present, so a partial object layers over whatever the struct already holds;
// unknown keys and wrongly typed values throw InvalidConfig.
namespace latentiv {

nlohmann::ordered_json to_json(const datagen::SimConfig& config);
nlohmann::ordered_json to_json(const factor::TrainConfig& config);
nlohmann::ordered_json to_json(const estimate::EstimatorOptions& options);

void apply_json(const nlohmann::json& j, datagen::SimConfig& config);
void apply_json(const nlohmann::json& j, factor::TrainConfig& config);
void apply_json(const nlohmann::json& j, estimate::EstimatorOptions& options);

}  // namespace latentiv
