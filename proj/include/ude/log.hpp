#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "json.hpp"

namespace ude {

// Structured run log: one JSON object per line with fields
// {ts, level, phase, dialog_id?, event, detail}. Thread-safe; a default
// constructed logger discards everything.
class Logger {
 public:
  Logger() = default;
  explicit Logger(const std::filesystem::path& file);

  void event(std::string_view level, std::string_view phase, std::string_view event_name,
             const nlohmann::json& detail = nlohmann::json::object(),
             std::string_view dialog_id = {});

  void info(std::string_view phase, std::string_view event_name,
            const nlohmann::json& detail = nlohmann::json::object(),
            std::string_view dialog_id = {}) {
    event("info", phase, event_name, detail, dialog_id);
  }
  void error(std::string_view phase, std::string_view event_name,
             const nlohmann::json& detail = nlohmann::json::object(),
             std::string_view dialog_id = {}) {
    event("error", phase, event_name, detail, dialog_id);
  }

  bool enabled() const { return out_ != nullptr; }

  static std::string timestamp_utc();

 private:
  std::shared_ptr<std::ofstream> out_;
  std::shared_ptr<std::mutex> mu_;
};

}  // namespace ude
