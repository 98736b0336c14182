#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ude/connectors.hpp"

namespace ude {

// Builds a connector from a model/judge config section:
//   {"type": "scripted", "mode": "echo", ...}
//   {"type": "openai_compatible", "base_url": ..., "model": ..., "api_key_env": ...}
//   {"type": "memory_agent", "inner": {<connector config>}, "policy": {...},
//    "render_mode": "pairs"}
// Throws ConfigError on an unknown type or missing required fields.
std::shared_ptr<Connector> make_connector(const nlohmann::json& config);

// Config validation without construction; one problem string per issue, each
// prefixed with `where` (e.g. "model.type: ...").
std::vector<std::string> validate_connector_config(const nlohmann::json& config,
                                                   const std::string& where);

}  // namespace ude
