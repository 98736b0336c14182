#include "ude/log.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

namespace ude {

Logger::Logger(const std::filesystem::path& file)
    : out_(std::make_shared<std::ofstream>()), mu_(std::make_shared<std::mutex>()) {
  std::filesystem::create_directories(file.parent_path());
  out_->open(file, std::ios::app);  // resumed runs keep the earlier trail
  if (!out_->is_open()) out_.reset();
}

std::string Logger::timestamp_utc() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms.count()));
  return buf;
}

void Logger::event(std::string_view level, std::string_view phase, std::string_view event_name,
                   const nlohmann::json& detail, std::string_view dialog_id) {
  if (!out_) return;
  nlohmann::ordered_json line;
  line["ts"] = timestamp_utc();
  line["level"] = level;
  line["phase"] = phase;
  if (!dialog_id.empty()) line["dialog_id"] = dialog_id;
  line["event"] = event_name;
  line["detail"] = detail;

  std::lock_guard<std::mutex> lock(*mu_);
  *out_ << line.dump() << "\n";
  out_->flush();
}

}  // namespace ude
