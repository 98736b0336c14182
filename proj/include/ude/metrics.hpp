#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ude/connectors.hpp"
#include "ude/generation.hpp"
#include "ude/log.hpp"
#include "ude/schema.hpp"

namespace ude {

// Everything a metric may look at when scoring one generated assistant turn.
struct TurnContext {
  std::string dialog_id;
  std::string turn_id;
  std::string prediction;
  std::vector<Message> history;  // context the model saw; ends with the user turn
  std::optional<std::string> reference;
  std::optional<std::string> reference_document;
  nlohmann::json turn_labels = nlohmann::json::object();
  std::shared_ptr<const Dialog> dialog;
};

struct ScoreRecord {
  std::string dialog_id;
  std::string turn_id;
  std::string metric_name;
  double score = 0.0;  // always within [0,1]
  nlohmann::json detail = nlohmann::json::object();

  nlohmann::ordered_json to_json() const;
  static ScoreRecord from_json(const nlohmann::json& j);
};

// Scores are range-checked at construction so aggregation never sees
// out-of-range values.
ScoreRecord make_score_record(std::string dialog_id, std::string turn_id,
                              std::string metric_name, double score,
                              nlohmann::json detail = nlohmann::json::object());

// Judge configuration shared by every llm_judge instance in a run.
struct JudgeRuntime {
  std::shared_ptr<Connector> judge;
  GenerationParams params;
  std::string template_text;            // empty -> default_judge_template()
  std::string on_parse_failure = "zero";  // zero | skip | error
  int parse_retries = 2;                // re-asks after the first unparsable reply
};

const std::string& default_judge_template();

class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  // nullopt only under the judge's "skip" parse-failure policy.
  virtual std::optional<ScoreRecord> score(const TurnContext& ctx) = 0;
};

using MetricFactory =
    std::function<std::unique_ptr<Metric>(const nlohmann::json& args, const JudgeRuntime&)>;

// METRIC_REGISTRY: name -> constructor, with per-metric argument validation.
class MetricRegistry {
 public:
  void register_metric(const std::string& name, MetricFactory factory);
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  std::unique_ptr<Metric> resolve(const MetricSpec& spec, const JudgeRuntime& runtime) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, MetricFactory> metrics_;
};

// Registry preloaded with exact_match, llm_judge, instruction_adherence,
// math_answer and code_rule.
MetricRegistry& builtin_metrics();

struct EvaluationPlan {
  std::vector<Dialog> dialogs;  // already filtered to pending
  std::map<std::string, GenerationRecord> generations;
  JudgeRuntime judge;
  int workers = 1;
  std::filesystem::path output_dir;
  Logger log;
  const MetricRegistry* registry = nullptr;  // default: builtin_metrics()
};

// Scores every do_eval assistant turn of every complete dialog, one ScoreRecord
// per MetricSpec, checkpointing scores/<dialog_id>.json atomically with the
// same dialogue-level parallelism as generation. Dialogs without a complete
// generation record are skipped and logged. Registry/config errors abort;
// per-turn metric errors become score-0 records with detail.error.
std::map<std::string, std::vector<ScoreRecord>> run_evaluation(const EvaluationPlan& plan);

std::vector<std::string> scan_resume_scores(const std::filesystem::path& output_dir,
                                            const std::vector<Dialog>& dialogs);

std::optional<std::vector<ScoreRecord>> read_score_records(
    const std::filesystem::path& output_dir, const std::string& dialog_id);

}  // namespace ude
