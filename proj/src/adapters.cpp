#include "ude/adapters.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace ude {

namespace {

namespace fs = std::filesystem;

// Per-record failure inside an adapter; caught and routed to the collector.
struct RecordFail : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Collects bad records. strict=true fails on the first one; otherwise the whole
// file is scanned and the failure summary is raised at the end.
struct IssueCollector {
  std::string adapter_id;
  bool strict = false;
  std::vector<AdapterError::RecordIssue> issues;

  void fail(std::size_t index, const std::string& reason) {
    if (strict) throw AdapterError(adapter_id, {{index, reason}});
    issues.push_back({index, reason});
  }
  void finish() const {
    if (!issues.empty()) throw AdapterError(adapter_id, issues);
  }
};

bool option_flag(const nlohmann::json& options, const char* key, bool fallback) {
  if (!options.is_object()) return fallback;
  auto it = options.find(key);
  if (it == options.end() || !it->is_boolean()) return fallback;
  return it->get<bool>();
}

std::string option_string(const nlohmann::json& options, const char* key,
                          const std::string& fallback) {
  if (!options.is_object()) return fallback;
  auto it = options.find(key);
  if (it == options.end() || !it->is_string()) return fallback;
  return it->get<std::string>();
}

std::vector<std::pair<std::size_t, nlohmann::json>> read_jsonl(const fs::path& path,
                                                               IssueCollector& collector) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path.string());

  std::vector<std::pair<std::size_t, nlohmann::json>> records;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      records.emplace_back(index, nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      collector.fail(index, std::string("malformed JSON: ") + e.what());
    }
    ++index;
  }
  return records;
}

std::string padded_index(std::size_t index) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

// dialog_id from the record when present, else "<adapter>-<zero-padded index>".
std::string record_dialog_id(const nlohmann::json& rec, const std::string& adapter_id,
                             std::size_t index) {
  for (const char* key : {"dialog_id", "session_id", "id"}) {
    auto it = rec.find(key);
    if (it == rec.end()) continue;
    if (it->is_string() && !it->get<std::string>().empty()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  }
  return adapter_id + "-" + padded_index(index);
}

struct RawMsg {
  Role role = Role::User;
  std::string content;
  std::optional<std::string> reference;
};

std::string require_text(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw RecordFail(std::string("missing key '") + key + "'");
  if (!it->is_string()) throw RecordFail(std::string("key '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_text(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw RecordFail(std::string("key '") + key + "' must be a string");
  return it->get<std::string>();
}

// Accepts either explicit {"role","content"} messages or {"user","bot"} pairs.
std::vector<RawMsg> parse_raw_messages(const nlohmann::json& items) {
  if (!items.is_array()) throw RecordFail("expected an array of messages");
  std::vector<RawMsg> out;
  for (const auto& item : items) {
    if (!item.is_object()) throw RecordFail("message entries must be objects");
    if (item.contains("role")) {
      RawMsg m;
      std::string role_text = require_text(item, "role");
      auto role = role_from_string(role_text);
      if (!role) throw RecordFail("unknown role '" + role_text + "'");
      m.role = *role;
      m.content = require_text(item, "content");
      m.reference = optional_text(item, "reference");
      out.push_back(std::move(m));
      continue;
    }
    // Pair form: one user utterance plus one assistant reply.
    std::optional<std::string> user = optional_text(item, "user");
    std::optional<std::string> bot = optional_text(item, "bot");
    if (!bot) bot = optional_text(item, "assistant");
    if (!user && !bot) throw RecordFail("message entry has neither 'role' nor 'user'/'bot' keys");
    if (user) out.push_back({Role::User, *user, std::nullopt});
    if (bot) {
      RawMsg m{Role::Assistant, *bot, std::nullopt};
      m.reference = optional_text(item, "reference");
      out.push_back(std::move(m));
    }
  }
  return out;
}

// The schema enforces strict role alternation; raw sources with repeated roles
// are merged into one message with a blank-line separator.
std::vector<RawMsg> merge_consecutive(std::vector<RawMsg> msgs) {
  std::vector<RawMsg> out;
  for (auto& m : msgs) {
    if (!out.empty() && out.back().role == m.role) {
      out.back().content += "\n\n" + m.content;
      if (m.reference) out.back().reference = m.reference;
    } else {
      out.push_back(std::move(m));
    }
  }
  return out;
}

Turn make_turn(std::size_t ordinal, Role role, std::string content) {
  Turn t;
  t.turn_id = auto_turn_id(ordinal);
  t.role = role;
  t.content = std::move(content);
  return t;
}

// A record that maps to an invalid dialog is a data problem, reported per
// record rather than as an adapter bug.
void check_mapped_dialog(const Dialog& d, std::size_t index, IssueCollector& collector) {
  ValidationReport report = validate_dialog(d);
  if (!report.ok()) {
    collector.fail(index, "record maps to an invalid dialog: " + report.violations[0].path +
                              ": " + report.violations[0].message);
  }
}

// --- built-in adapters ---

std::vector<Dialog> load_unified_jsonl(const fs::path& path, const nlohmann::json& options) {
  IssueCollector collector{"unified_jsonl", option_flag(options, "strict", false), {}};
  std::vector<Dialog> dialogs;
  for (const auto& [index, rec] : read_jsonl(path, collector)) {
    try {
      Dialog d = dialog_from_json(rec);
      ValidationReport report = validate_dialog(d);
      if (!report.ok()) {
        collector.fail(index, "invalid dialog: " + report.violations[0].path + ": " +
                                  report.violations[0].message);
        continue;
      }
      dialogs.push_back(std::move(d));
    } catch (const SchemaError& e) {
      collector.fail(index, e.what());
    }
  }
  collector.finish();
  return dialogs;
}

// Per-turn-judged chat: every assistant turn is evaluated by the LLM judge and
// later turns replay the dataset history.
std::vector<Dialog> load_chat_transcript(const fs::path& path, const nlohmann::json& options) {
  IssueCollector collector{"chat_transcript", option_flag(options, "strict", false), {}};
  std::vector<Dialog> dialogs;
  for (const auto& [index, rec] : read_jsonl(path, collector)) {
    try {
      if (!rec.is_object()) throw RecordFail("record must be an object");
      const nlohmann::json* items = nullptr;
      if (rec.contains("messages")) {
        items = &rec["messages"];
      } else if (rec.contains("history")) {
        items = &rec["history"];
      } else {
        throw RecordFail("record needs a 'messages' or 'history' array");
      }
      std::vector<RawMsg> msgs = merge_consecutive(parse_raw_messages(*items));
      if (msgs.empty()) throw RecordFail("record has no messages");

      Dialog d;
      d.dialog_id = record_dialog_id(rec, "chat_transcript", index);
      d.dialog_eval_config.use_reference_history = true;
      for (std::size_t i = 0; i < msgs.size(); ++i) {
        Turn t = make_turn(i, msgs[i].role, msgs[i].content);
        if (msgs[i].role == Role::Assistant) {
          t.reference = msgs[i].reference;
          t.eval_config.do_eval = true;
          nlohmann::json args = nlohmann::json::object();
          if (!t.reference) args["reference_free"] = true;
          t.eval_config.metrics.push_back({"llm_judge", std::move(args)});
        }
        d.dialog_turns.push_back(std::move(t));
      }
      check_mapped_dialog(d, index, collector);
      dialogs.push_back(std::move(d));
    } catch (const RecordFail& e) {
      collector.fail(index, e.what());
    }
  }
  collector.finish();
  return dialogs;
}

// Long-context memory archetype: the history is context only; the final
// question/answer pair is the sole evaluated turn.
std::vector<Dialog> load_final_question(const fs::path& path, const nlohmann::json& options) {
  IssueCollector collector{"final_question", option_flag(options, "strict", false), {}};
  std::string metric = option_string(options, "metric", "exact_match");
  if (metric != "exact_match" && metric != "llm_judge") {
    throw AdapterError("final_question",
                       {{0, "option 'metric' must be 'exact_match' or 'llm_judge'"}});
  }

  std::vector<Dialog> dialogs;
  for (const auto& [index, rec] : read_jsonl(path, collector)) {
    try {
      if (!rec.is_object()) throw RecordFail("record must be an object");
      std::string question = require_text(rec, "question");
      std::string answer = require_text(rec, "answer");
      std::optional<std::string> evidence = optional_text(rec, "evidence");

      std::vector<RawMsg> msgs;
      if (rec.contains("history")) msgs = parse_raw_messages(rec["history"]);
      msgs.push_back({Role::User, question, std::nullopt});
      msgs = merge_consecutive(std::move(msgs));

      Dialog d;
      d.dialog_id = record_dialog_id(rec, "final_question", index);
      d.dialog_eval_config.use_reference_history = true;
      for (std::size_t i = 0; i < msgs.size(); ++i) {
        d.dialog_turns.push_back(make_turn(i, msgs[i].role, msgs[i].content));
      }
      Turn final_turn = make_turn(msgs.size(), Role::Assistant, answer);
      final_turn.reference = answer;
      final_turn.reference_document = evidence;
      final_turn.eval_config.do_eval = true;
      nlohmann::json args = nlohmann::json::object();
      if (metric == "exact_match") args["mode"] = "contains";
      final_turn.eval_config.metrics.push_back({metric, std::move(args)});
      d.dialog_turns.push_back(std::move(final_turn));

      check_mapped_dialog(d, index, collector);
      dialogs.push_back(std::move(d));
    } catch (const RecordFail& e) {
      collector.fail(index, e.what());
    }
  }
  collector.finish();
  return dialogs;
}

// Instruction-following archetype: on-policy generation, rule lists carried in
// turn_labels and scored by instruction_adherence.
std::vector<Dialog> load_onpolicy_instructions(const fs::path& path,
                                               const nlohmann::json& options) {
  IssueCollector collector{"onpolicy_instructions", option_flag(options, "strict", false), {}};
  std::vector<Dialog> dialogs;
  for (const auto& [index, rec] : read_jsonl(path, collector)) {
    try {
      if (!rec.is_object() || !rec.contains("turns") || !rec["turns"].is_array() ||
          rec["turns"].empty()) {
        throw RecordFail("record needs a non-empty 'turns' array");
      }
      Dialog d;
      d.dialog_id = record_dialog_id(rec, "onpolicy_instructions", index);
      d.dialog_eval_config.use_reference_history = false;
      std::size_t ordinal = 0;
      for (const auto& raw_turn : rec["turns"]) {
        if (!raw_turn.is_object()) throw RecordFail("turn entries must be objects");
        d.dialog_turns.push_back(
            make_turn(ordinal++, Role::User, require_text(raw_turn, "prompt")));

        Turn asst = make_turn(ordinal++, Role::Assistant, "");
        auto instructions = raw_turn.find("instructions");
        if (instructions != raw_turn.end() && instructions->is_array() && !instructions->empty()) {
          asst.eval_config.do_eval = true;
          asst.eval_config.metrics.push_back(
              {"instruction_adherence", nlohmann::json{{"reference_free", true}}});
          asst.turn_labels["instructions"] = *instructions;
        }
        d.dialog_turns.push_back(std::move(asst));
      }
      check_mapped_dialog(d, index, collector);
      dialogs.push_back(std::move(d));
    } catch (const RecordFail& e) {
      collector.fail(index, e.what());
    }
  }
  collector.finish();
  return dialogs;
}

// Coding archetype: rules announced across the session accumulate, and every
// assistant turn is checked against everything announced so far.
std::vector<Dialog> load_rule_code(const fs::path& path, const nlohmann::json& options) {
  IssueCollector collector{"rule_code", option_flag(options, "strict", false), {}};
  std::vector<Dialog> dialogs;
  for (const auto& [index, rec] : read_jsonl(path, collector)) {
    try {
      if (!rec.is_object() || !rec.contains("turns") || !rec["turns"].is_array() ||
          rec["turns"].empty()) {
        throw RecordFail("record needs a non-empty 'turns' array");
      }
      Dialog d;
      d.dialog_id = record_dialog_id(rec, "rule_code", index);
      d.dialog_eval_config.use_reference_history = true;

      nlohmann::json accumulated = nlohmann::json::array();
      std::size_t ordinal = 0;
      for (const auto& raw_turn : rec["turns"]) {
        if (!raw_turn.is_object()) throw RecordFail("turn entries must be objects");
        d.dialog_turns.push_back(
            make_turn(ordinal++, Role::User, require_text(raw_turn, "prompt")));

        auto rules = raw_turn.find("rules");
        if (rules != raw_turn.end()) {
          if (!rules->is_array()) throw RecordFail("'rules' must be an array");
          for (const auto& rule : *rules) accumulated.push_back(rule);
        }

        Turn asst = make_turn(ordinal++, Role::Assistant,
                              optional_text(raw_turn, "response").value_or(""));
        if (!accumulated.empty()) {
          asst.eval_config.do_eval = true;
          asst.eval_config.metrics.push_back({"code_rule", nlohmann::json{{"reference_free", true}}});
          asst.turn_labels["code_rules"] = accumulated;
        }
        d.dialog_turns.push_back(std::move(asst));
      }
      check_mapped_dialog(d, index, collector);
      dialogs.push_back(std::move(d));
    } catch (const RecordFail& e) {
      collector.fail(index, e.what());
    }
  }
  collector.finish();
  return dialogs;
}

}  // namespace

nlohmann::ordered_json DatasetStats::to_json() const {
  return nlohmann::ordered_json{{"n_dialogs", n_dialogs},
                                {"mean_turns_per_dialog", mean_turns_per_dialog},
                                {"n_eval_turns", n_eval_turns},
                                {"any_multi_metric", any_multi_metric},
                                {"any_on_policy", any_on_policy}};
}

void AdapterRegistry::register_adapter(const std::string& id, AdapterFn loader) {
  std::lock_guard<std::mutex> lock(mu_);
  if (adapters_.count(id) != 0) throw DuplicateAdapterError(id);
  adapters_[id] = std::move(loader);
}

bool AdapterRegistry::has(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return adapters_.count(id) != 0;
}

std::vector<std::string> AdapterRegistry::ids() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, fn] : adapters_) out.push_back(id);
  return out;
}

std::vector<Dialog> AdapterRegistry::load(const std::string& id,
                                          const std::filesystem::path& source_path,
                                          const nlohmann::json& options) const {
  AdapterFn loader;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = adapters_.find(id);
    if (it == adapters_.end()) throw UnknownAdapterError(id);
    loader = it->second;
  }
  if (!std::filesystem::exists(source_path)) {
    throw IoError("dataset file not found: " + source_path.string());
  }

  std::vector<Dialog> dialogs =
      loader(source_path, options.is_object() ? options : nlohmann::json::object());

  // Adapter contract: only valid dialogs with unique ids leave this function.
  std::set<std::string> seen;
  for (const Dialog& d : dialogs) {
    ValidationReport report = validate_dialog(d);
    if (!report.ok()) {
      throw ValidationError("adapter '" + id + "' emitted invalid dialog '" + d.dialog_id +
                            "': " + report.violations[0].path + ": " +
                            report.violations[0].message);
    }
    if (!seen.insert(d.dialog_id).second) {
      throw ValidationError("adapter '" + id + "' emitted duplicate dialog_id '" + d.dialog_id +
                            "'");
    }
  }
  return dialogs;
}

AdapterRegistry& builtin_adapters() {
  static AdapterRegistry registry;
  static const bool initialized = [] {
    registry.register_adapter("unified_jsonl", load_unified_jsonl);
    registry.register_adapter("chat_transcript", load_chat_transcript);
    registry.register_adapter("final_question", load_final_question);
    registry.register_adapter("onpolicy_instructions", load_onpolicy_instructions);
    registry.register_adapter("rule_code", load_rule_code);
    return true;
  }();
  (void)initialized;
  return registry;
}

DatasetStats compute_stats(const std::vector<Dialog>& dialogs) {
  DatasetStats stats;
  stats.n_dialogs = dialogs.size();
  std::size_t total_turns = 0;
  for (const Dialog& d : dialogs) {
    total_turns += d.dialog_turns.size();
    if (!d.dialog_eval_config.use_reference_history) stats.any_on_policy = true;
    for (const Turn& t : d.dialog_turns) {
      if (!t.eval_config.do_eval) continue;
      ++stats.n_eval_turns;
      if (t.eval_config.metrics.size() >= 2) stats.any_multi_metric = true;
    }
  }
  stats.mean_turns_per_dialog = dialogs.empty() ? 0.0
                                                : static_cast<double>(total_turns) /
                                                      static_cast<double>(dialogs.size());
  return stats;
}

}  // namespace ude
