#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ude/connectors.hpp"
#include "ude/log.hpp"
#include "ude/schema.hpp"

namespace ude {

struct TurnGeneration {
  std::string turn_id;
  std::string prediction;
  double latency_ms = 0.0;
  int request_count = 0;
};

// Persisted per-dialog generation checkpoint: generations/<dialog_id>.json.
struct GenerationRecord {
  std::string dialog_id;
  std::vector<TurnGeneration> turns;  // one entry per assistant turn, in order
  std::string status;                 // "complete" | "failed"
  std::optional<std::string> failure_reason;

  bool complete() const { return status == "complete"; }
  std::map<std::string, std::string> predictions() const;

  nlohmann::ordered_json to_json() const;
  static GenerationRecord from_json(const nlohmann::json& j);
};

struct RunPlan {
  std::vector<Dialog> dialogs;
  std::shared_ptr<Connector> connector;
  GenerationParams params;
  int workers = 1;
  std::filesystem::path output_dir;
  Logger log;
};

// Context for generating dialog_turns[upto_turn_index] (an assistant turn):
// all earlier turns, with prior assistant content replaced by the model's own
// predictions when the dialog is on-policy. Ends with the preceding user turn.
std::vector<Message> build_context(const Dialog& d, std::size_t upto_turn_index,
                                   const std::map<std::string, std::string>& predictions_so_far);

// Drives every dialog in the plan through the connector with dialogue-level
// parallelism. Each finished dialog is checkpointed atomically before its
// worker takes the next one; per-dialog failures are recorded, not fatal.
std::map<std::string, GenerationRecord> run_generation(const RunPlan& plan);

// Dialog ids whose generation checkpoint is absent, unparsable or (by default)
// failed. Complete dialogs are never regenerated.
std::vector<std::string> scan_resume(const std::filesystem::path& output_dir,
                                     const std::vector<Dialog>& dialogs,
                                     bool retry_failed = true);

std::optional<GenerationRecord> read_generation_record(const std::filesystem::path& output_dir,
                                                       const std::string& dialog_id);

// Checkpoint plumbing, shared with the evaluation phase.
std::string encode_dialog_filename(const std::string& dialog_id);
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::optional<std::string> read_file_if_exists(const std::filesystem::path& path);

}  // namespace ude
