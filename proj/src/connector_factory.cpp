#include "ude/connector_factory.hpp"

#include "ude/memory_agent.hpp"

namespace ude {

std::vector<std::string> validate_connector_config(const nlohmann::json& config,
                                                   const std::string& where) {
  std::vector<std::string> problems;
  if (!config.is_object()) {
    problems.push_back(where + ": must be an object");
    return problems;
  }
  auto type_it = config.find("type");
  if (type_it == config.end() || !type_it->is_string()) {
    problems.push_back(where + ".type: missing connector type");
    return problems;
  }
  std::string type = type_it->get<std::string>();
  if (type == "scripted") {
    std::string mode = config.value("mode", "echo");
    if (mode != "echo" && mode != "table" && mode != "hash") {
      problems.push_back(where + ".mode: must be one of echo, table, hash");
    }
  } else if (type == "openai_compatible") {
    if (!config.contains("base_url") || !config["base_url"].is_string() ||
        config["base_url"].get<std::string>().empty()) {
      problems.push_back(where + ".base_url: required for openai_compatible");
    }
    if (!config.contains("model") || !config["model"].is_string() ||
        config["model"].get<std::string>().empty()) {
      problems.push_back(where + ".model: required for openai_compatible");
    }
  } else if (type == "memory_agent") {
    if (!config.contains("inner")) {
      problems.push_back(where + ".inner: memory_agent needs an inner connector config");
    } else {
      auto inner = validate_connector_config(config["inner"], where + ".inner");
      problems.insert(problems.end(), inner.begin(), inner.end());
      if (config["inner"].is_object() && config["inner"].value("type", "") == "memory_agent") {
        problems.push_back(where + ".inner.type: memory agents cannot nest");
      }
    }
    std::string render = config.value("render_mode", "pairs");
    if (render != "pairs" && render != "system_block") {
      problems.push_back(where + ".render_mode: must be 'pairs' or 'system_block'");
    }
    if (config.contains("policy") && config["policy"].is_object()) {
      RetrievalPolicy p = RetrievalPolicy::from_json(config["policy"]);
      if (p.k_short > p.k_long) problems.push_back(where + ".policy: k_short must be <= k_long");
      if (p.turn_threshold < 1) {
        problems.push_back(where + ".policy.turn_threshold: must be >= 1");
      }
      if (p.scorer != "lexical_overlap") {
        problems.push_back(where + ".policy.scorer: only 'lexical_overlap' is supported");
      }
    }
  } else {
    problems.push_back(where + ".type: unknown connector type '" + type + "'");
  }
  return problems;
}

std::shared_ptr<Connector> make_connector(const nlohmann::json& config) {
  std::vector<std::string> problems = validate_connector_config(config, "connector");
  if (!problems.empty()) throw ConfigError(problems);

  std::string type = config["type"].get<std::string>();
  if (type == "scripted") {
    return std::make_shared<ScriptedConnector>(ScriptedConnector::options_from_json(config));
  }
  if (type == "openai_compatible") {
    return std::make_shared<OpenAiCompatibleConnector>(
        OpenAiCompatibleConnector::options_from_json(config));
  }
  // memory_agent
  MemoryAgentOptions options;
  if (config.contains("policy")) options.policy = RetrievalPolicy::from_json(config["policy"]);
  options.render_mode = config.value("render_mode", "pairs");
  return std::make_shared<MemoryAgentConnector>(make_connector(config["inner"]), options);
}

}  // namespace ude
