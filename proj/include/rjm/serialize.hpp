#pragma once

#include <json.hpp>

#include "rjm/nuts.hpp"
#include "rjm/types.hpp"

namespace rjm {

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);  // throws ValidationError

nlohmann::json to_json(const SamplerConfig& config);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

}  // namespace rjm
