#include "ude/generation.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "ude/worker_pool.hpp"

namespace ude {

namespace fs = std::filesystem;

std::string encode_dialog_filename(const std::string& dialog_id) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  out.reserve(dialog_id.size());
  for (unsigned char c : dialog_id) {
    bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                c == '-' || c == '_' || c == '.';
    if (safe) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xF]);
    }
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("short write: " + tmp.string());
  }
  // Same-directory rename: a concurrent scan sees either nothing or the whole file.
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " +
                        ec.message());
}

std::optional<std::string> read_file_if_exists(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> GenerationRecord::predictions() const {
  std::map<std::string, std::string> out;
  for (const TurnGeneration& t : turns) out[t.turn_id] = t.prediction;
  return out;
}

nlohmann::ordered_json GenerationRecord::to_json() const {
  nlohmann::ordered_json turns_json = nlohmann::ordered_json::array();
  for (const TurnGeneration& t : turns) {
    turns_json.push_back(nlohmann::ordered_json{{"turn_id", t.turn_id},
                                                {"prediction", t.prediction},
                                                {"latency_ms", t.latency_ms},
                                                {"request_count", t.request_count}});
  }
  nlohmann::ordered_json out;
  out["dialog_id"] = dialog_id;
  out["turns"] = std::move(turns_json);
  out["status"] = status;
  out["failure_reason"] = failure_reason ? nlohmann::ordered_json(*failure_reason) : nullptr;
  return out;
}

GenerationRecord GenerationRecord::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("$", "generation record must be an object");
  GenerationRecord rec;
  if (!j.contains("dialog_id") || !j["dialog_id"].is_string()) {
    throw SchemaError("dialog_id", "missing or not a string");
  }
  rec.dialog_id = j["dialog_id"].get<std::string>();
  if (!j.contains("status") || !j["status"].is_string()) {
    throw SchemaError("status", "missing or not a string");
  }
  rec.status = j["status"].get<std::string>();
  if (rec.status != "complete" && rec.status != "failed") {
    throw SchemaError("status", "must be 'complete' or 'failed'");
  }
  if (j.contains("failure_reason") && j["failure_reason"].is_string()) {
    rec.failure_reason = j["failure_reason"].get<std::string>();
  }
  if (j.contains("turns")) {
    if (!j["turns"].is_array()) throw SchemaError("turns", "expected array");
    for (const auto& tj : j["turns"]) {
      TurnGeneration t;
      t.turn_id = tj.at("turn_id").get<std::string>();
      t.prediction = tj.at("prediction").get<std::string>();
      t.latency_ms = tj.value("latency_ms", 0.0);
      t.request_count = tj.value("request_count", 0);
      rec.turns.push_back(std::move(t));
    }
  }
  return rec;
}

std::vector<Message> build_context(const Dialog& d, std::size_t upto_turn_index,
                                   const std::map<std::string, std::string>& predictions_so_far) {
  if (upto_turn_index >= d.dialog_turns.size() ||
      d.dialog_turns[upto_turn_index].role != Role::Assistant) {
    throw std::invalid_argument("build_context target must be an assistant turn");
  }
  const bool replay_dataset = d.dialog_eval_config.use_reference_history;

  std::vector<Message> context;
  context.reserve(upto_turn_index);
  for (std::size_t i = 0; i < upto_turn_index; ++i) {
    const Turn& t = d.dialog_turns[i];
    if (t.role == Role::Assistant) {
      if (replay_dataset) {
        context.push_back({Role::Assistant, t.content});
      } else {
        auto it = predictions_so_far.find(t.turn_id);
        if (it == predictions_so_far.end()) throw MissingPredictionError(t.turn_id);
        context.push_back({Role::Assistant, it->second});
      }
    } else {
      context.push_back({t.role, t.content});
    }
  }
  return context;
}

namespace {

GenerationRecord generate_one(const Dialog& d, Connector& connector,
                              const GenerationParams& params) {
  GenerationRecord rec;
  rec.dialog_id = d.dialog_id;

  std::size_t n_assistant = 0;
  for (const Turn& t : d.dialog_turns) {
    if (t.role == Role::Assistant) ++n_assistant;
  }

  ConnectorSession session;
  try {
    session = connector.begin_dialog(
        d.dialog_id, SessionInfo{static_cast<int>(d.dialog_turns.size())});
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.failure_reason = e.what();
    return rec;
  }

  std::map<std::string, std::string> predictions;
  try {
    for (std::size_t i = 0; i < d.dialog_turns.size(); ++i) {
      if (d.dialog_turns[i].role != Role::Assistant) continue;
      std::vector<Message> context = build_context(d, i, predictions);
      auto started = std::chrono::steady_clock::now();
      GenerationOutcome outcome = connector.generate_outcome(session, context, params);
      double latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
              .count();
      predictions[d.dialog_turns[i].turn_id] = outcome.text;
      rec.turns.push_back({d.dialog_turns[i].turn_id, outcome.text, latency_ms,
                           outcome.request_count});
    }
    rec.status = "complete";
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.failure_reason = e.what();
  }

  // Sessions are closed no matter how generation went.
  if (session.open()) connector.end_dialog(session);

  if (rec.status == "complete" && rec.turns.size() != n_assistant) {
    rec.status = "failed";
    rec.failure_reason = "internal: prediction count mismatch";
  }
  return rec;
}

}  // namespace

std::map<std::string, GenerationRecord> run_generation(const RunPlan& plan) {
  if (plan.workers < 1) throw std::invalid_argument("run_generation requires workers >= 1");
  if (!plan.connector) throw std::invalid_argument("run_generation requires a connector");
  fs::path dir = plan.output_dir / "generations";
  fs::create_directories(dir);

  std::vector<GenerationRecord> results(plan.dialogs.size());
  Logger log = plan.log;
  Connector& connector = *plan.connector;
  const GenerationParams& params = plan.params;
  const std::vector<Dialog>& dialogs = plan.dialogs;

  parallel_for(dialogs.size(), plan.workers, [&](std::size_t i) {
    const Dialog& d = dialogs[i];
    GenerationRecord rec = generate_one(d, connector, params);
    write_file_atomic(dir / (encode_dialog_filename(d.dialog_id) + ".json"),
                      rec.to_json().dump(2) + "\n");
    if (rec.complete()) {
      log.info("generation", "generated", {{"turns", rec.turns.size()}}, d.dialog_id);
    } else {
      log.error("generation", "failed", {{"reason", rec.failure_reason.value_or("")}},
                d.dialog_id);
    }
    results[i] = std::move(rec);
  });

  std::map<std::string, GenerationRecord> out;
  for (GenerationRecord& rec : results) {
    if (!rec.dialog_id.empty()) out.emplace(rec.dialog_id, std::move(rec));
  }
  return out;
}

std::optional<GenerationRecord> read_generation_record(const fs::path& output_dir,
                                                       const std::string& dialog_id) {
  fs::path path = output_dir / "generations" / (encode_dialog_filename(dialog_id) + ".json");
  std::optional<std::string> content = read_file_if_exists(path);
  if (!content) return std::nullopt;
  try {
    GenerationRecord rec = GenerationRecord::from_json(nlohmann::json::parse(*content));
    if (rec.dialog_id != dialog_id) return std::nullopt;  // stale or corrupted checkpoint
    return rec;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> scan_resume(const fs::path& output_dir,
                                     const std::vector<Dialog>& dialogs, bool retry_failed) {
  std::vector<std::string> pending;
  for (const Dialog& d : dialogs) {
    std::optional<GenerationRecord> rec = read_generation_record(output_dir, d.dialog_id);
    if (!rec) {
      pending.push_back(d.dialog_id);
    } else if (!rec->complete() && retry_failed) {
      pending.push_back(d.dialog_id);
    }
  }
  return pending;
}

}  // namespace ude
