#include "ude/schema.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace ude {

namespace {

std::string turn_path(std::size_t i, const char* suffix = nullptr) {
  std::ostringstream os;
  os << "dialog_turns[" << i << "]";
  if (suffix != nullptr) os << "." << suffix;
  return os.str();
}

// Rejects values that cannot survive a JSON round trip (non-finite numbers,
// binary blobs). Keys of nested objects are strings by construction.
void ensure_jsonable(const nlohmann::json& value, const std::string& path) {
  switch (value.type()) {
    case nlohmann::json::value_t::binary:
      throw SerializationError(path + ": binary values are not representable as JSON");
    case nlohmann::json::value_t::discarded:
      throw SerializationError(path + ": discarded value is not representable as JSON");
    case nlohmann::json::value_t::number_float:
      if (!std::isfinite(value.get<double>())) {
        throw SerializationError(path + ": non-finite number is not representable as JSON");
      }
      return;
    case nlohmann::json::value_t::object:
      for (const auto& [k, v] : value.items()) ensure_jsonable(v, path + "." + k);
      return;
    case nlohmann::json::value_t::array: {
      std::size_t i = 0;
      for (const auto& v : value) ensure_jsonable(v, path + "[" + std::to_string(i++) + "]");
      return;
    }
    default:
      return;
  }
}

// Copies a plain json value into ordered_json. Plain objects iterate in sorted
// key order, so the copy is canonical and byte-stable.
nlohmann::ordered_json to_ordered(const nlohmann::json& value) {
  switch (value.type()) {
    case nlohmann::json::value_t::object: {
      nlohmann::ordered_json out = nlohmann::ordered_json::object();
      for (const auto& [k, v] : value.items()) out[k] = to_ordered(v);
      return out;
    }
    case nlohmann::json::value_t::array: {
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (const auto& v : value) out.push_back(to_ordered(v));
      return out;
    }
    default:
      return value;
  }
}

nlohmann::json from_ordered(const nlohmann::ordered_json& value) {
  switch (value.type()) {
    case nlohmann::ordered_json::value_t::object: {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& [k, v] : value.items()) out[k] = from_ordered(v);
      return out;
    }
    case nlohmann::ordered_json::value_t::array: {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& v : value) out.push_back(from_ordered(v));
      return out;
    }
    default:
      return value;
  }
}

const nlohmann::json* find_key(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string require_string(const nlohmann::json& obj, const char* key, const std::string& path) {
  const nlohmann::json* v = find_key(obj, key);
  if (v == nullptr) throw SchemaError(path, "missing required key");
  if (!v->is_string()) throw SchemaError(path, "expected string");
  return v->get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                           const std::string& path) {
  const nlohmann::json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) return std::nullopt;
  if (!v->is_string()) throw SchemaError(path, "expected string or null");
  return v->get<std::string>();
}

nlohmann::json object_or_default(const nlohmann::json& obj, const char* key,
                                 const std::string& path) {
  const nlohmann::json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) return nlohmann::json::object();
  if (!v->is_object()) throw SchemaError(path, "expected object");
  return *v;
}

bool bool_or_default(const nlohmann::json& obj, const char* key, bool fallback,
                     const std::string& path) {
  const nlohmann::json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) return fallback;
  if (!v->is_boolean()) throw SchemaError(path, "expected boolean");
  return v->get<bool>();
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

std::optional<Role> role_from_string(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  return std::nullopt;
}

std::string auto_turn_id(std::size_t ordinal) {
  std::ostringstream os;
  os << "t" << std::setw(3) << std::setfill('0') << ordinal;
  return os.str();
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.path << ": " << v.message << "\n";
  return os.str();
}

ValidationReport validate_dialog(const Dialog& d) {
  ValidationReport report;
  auto add = [&report](std::string path, std::string message) {
    report.violations.push_back({std::move(path), std::move(message)});
  };

  if (d.dialog_id.empty()) add("dialog_id", "must be non-empty");
  if (!d.dialog_raw_info.is_object()) add("dialog_raw_info", "must be a JSON object");
  if (!d.dialog_labels.is_object()) add("dialog_labels", "must be a JSON object");

  if (d.dialog_turns.empty()) {
    add("dialog_turns", "must be non-empty");
    return report;
  }

  bool any_assistant = false;
  std::set<std::string> seen_turn_ids;
  for (std::size_t i = 0; i < d.dialog_turns.size(); ++i) {
    const Turn& t = d.dialog_turns[i];

    if (t.turn_id.empty()) {
      add(turn_path(i, "turn_id"), "must be non-empty");
    } else if (!seen_turn_ids.insert(t.turn_id).second) {
      add(turn_path(i, "turn_id"), "duplicate turn_id '" + t.turn_id + "' within dialog");
    }
    if (!t.turn_labels.is_object()) add(turn_path(i, "turn_labels"), "must be a JSON object");

    // Role grammar: optional leading system turn, then strict user/assistant
    // alternation starting with user, optionally truncated after a user turn.
    if (t.role == Role::System && i != 0) {
      add(turn_path(i, "role"), "system turn is only allowed at the start of the dialog");
    }
    if (i == 0 && t.role == Role::Assistant) {
      add(turn_path(i, "role"), "dialog must not start with an assistant turn");
    }
    if (i > 0) {
      const Turn& prev = d.dialog_turns[i - 1];
      if (prev.role == Role::System && t.role == Role::Assistant) {
        add(turn_path(i, "role"), "first turn after the system turn must be a user turn");
      }
      if (prev.role == t.role && t.role != Role::System) {
        add(turn_path(i, "role"),
            std::string("consecutive turns share role '") + std::string(to_string(t.role)) + "'");
      }
    }
    if (t.role == Role::Assistant) any_assistant = true;

    for (std::size_t j = 0; j < t.eval_config.metrics.size(); ++j) {
      const MetricSpec& m = t.eval_config.metrics[j];
      std::string mpath = turn_path(i) + ".eval_config.metrics[" + std::to_string(j) + "]";
      if (m.class_name.empty()) add(mpath + ".class_name", "must be non-empty");
      if (!m.args.is_object()) add(mpath + ".args", "must be a JSON object");
    }

    if (t.eval_config.do_eval) {
      if (t.role != Role::Assistant) {
        add(turn_path(i, "eval_config.do_eval"), "do_eval is only allowed on assistant turns");
      }
      if (t.eval_config.metrics.empty()) {
        add(turn_path(i, "eval_config.metrics"), "must be non-empty when do_eval is true");
      }
      bool has_reference = t.reference.has_value() || t.reference_document.has_value();
      bool reference_free = false;
      for (const MetricSpec& m : t.eval_config.metrics) {
        if (m.args.is_object()) {
          auto it = m.args.find("reference_free");
          if (it != m.args.end() && it->is_boolean() && it->get<bool>()) reference_free = true;
        }
      }
      if (t.role == Role::Assistant && !has_reference && !reference_free) {
        add(turn_path(i, "reference"),
            "evaluated turn needs a reference, a reference_document, or a reference-free metric");
      }
    }
  }

  if (!any_assistant) add("dialog_turns", "at least one assistant turn is required");

  return report;
}

nlohmann::ordered_json dialog_to_json(const Dialog& d) {
  ensure_jsonable(d.dialog_raw_info, "dialog_raw_info");
  ensure_jsonable(d.dialog_labels, "dialog_labels");

  nlohmann::ordered_json out;
  out["dialog_id"] = d.dialog_id;
  out["dialog_raw_info"] = to_ordered(d.dialog_raw_info);
  out["dialog_labels"] = to_ordered(d.dialog_labels);
  out["dialog_eval_config"] = nlohmann::ordered_json{
      {"use_reference_history", d.dialog_eval_config.use_reference_history}};

  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < d.dialog_turns.size(); ++i) {
    const Turn& t = d.dialog_turns[i];
    ensure_jsonable(t.turn_labels, turn_path(i, "turn_labels"));

    nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < t.eval_config.metrics.size(); ++j) {
      const MetricSpec& m = t.eval_config.metrics[j];
      ensure_jsonable(m.args, turn_path(i) + ".eval_config.metrics[" + std::to_string(j) + "].args");
      nlohmann::ordered_json mj;
      mj["class_name"] = m.class_name;
      mj["args"] = to_ordered(m.args);
      metrics.push_back(std::move(mj));
    }

    nlohmann::ordered_json tj;
    tj["turn_id"] = t.turn_id;
    tj["role"] = std::string(to_string(t.role));
    tj["content"] = t.content;
    tj["reference"] = t.reference ? nlohmann::ordered_json(*t.reference) : nullptr;
    tj["reference_document"] =
        t.reference_document ? nlohmann::ordered_json(*t.reference_document) : nullptr;
    tj["eval_config"] =
        nlohmann::ordered_json{{"do_eval", t.eval_config.do_eval}, {"metrics", std::move(metrics)}};
    tj["turn_labels"] = to_ordered(t.turn_labels);
    turns.push_back(std::move(tj));
  }
  out["dialog_turns"] = std::move(turns);
  return out;
}

std::string serialize_dialog(const Dialog& d) { return dialog_to_json(d).dump(); }

Dialog dialog_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("$", "expected a JSON object");

  Dialog d;
  d.dialog_id = require_string(j, "dialog_id", "dialog_id");
  d.dialog_raw_info = object_or_default(j, "dialog_raw_info", "dialog_raw_info");
  d.dialog_labels = object_or_default(j, "dialog_labels", "dialog_labels");

  nlohmann::json eval_cfg = object_or_default(j, "dialog_eval_config", "dialog_eval_config");
  d.dialog_eval_config.use_reference_history = bool_or_default(
      eval_cfg, "use_reference_history", true, "dialog_eval_config.use_reference_history");

  nlohmann::json extra = nlohmann::json::object();
  static const std::set<std::string> kDialogKeys = {"dialog_id", "dialog_raw_info",
                                                    "dialog_labels", "dialog_eval_config",
                                                    "dialog_turns"};
  for (const auto& [k, v] : j.items()) {
    if (kDialogKeys.count(k) == 0) extra[k] = v;
  }

  const nlohmann::json* turns = find_key(j, "dialog_turns");
  if (turns == nullptr) throw SchemaError("dialog_turns", "missing required key");
  if (!turns->is_array()) throw SchemaError("dialog_turns", "expected array");

  static const std::set<std::string> kTurnKeys = {"turn_id",  "role",
                                                  "content",  "reference",
                                                  "reference_document", "eval_config",
                                                  "turn_labels"};
  for (std::size_t i = 0; i < turns->size(); ++i) {
    const nlohmann::json& tj = (*turns)[i];
    if (!tj.is_object()) throw SchemaError(turn_path(i), "expected object");

    Turn t;
    if (find_key(tj, "turn_id") != nullptr && !tj["turn_id"].is_null()) {
      if (!tj["turn_id"].is_string()) throw SchemaError(turn_path(i, "turn_id"), "expected string");
      t.turn_id = tj["turn_id"].get<std::string>();
    } else {
      t.turn_id = auto_turn_id(i);
    }

    std::string role_text = require_string(tj, "role", turn_path(i, "role"));
    std::optional<Role> role = role_from_string(role_text);
    if (!role) {
      throw SchemaError(turn_path(i, "role"),
                        "expected one of 'system', 'user', 'assistant', got '" + role_text + "'");
    }
    t.role = *role;
    t.content = require_string(tj, "content", turn_path(i, "content"));
    t.reference = optional_string(tj, "reference", turn_path(i, "reference"));
    t.reference_document =
        optional_string(tj, "reference_document", turn_path(i, "reference_document"));

    nlohmann::json ec = object_or_default(tj, "eval_config", turn_path(i, "eval_config"));
    t.eval_config.do_eval =
        bool_or_default(ec, "do_eval", false, turn_path(i, "eval_config.do_eval"));
    const nlohmann::json* metrics = find_key(ec, "metrics");
    if (metrics != nullptr && !metrics->is_null()) {
      if (!metrics->is_array()) {
        throw SchemaError(turn_path(i, "eval_config.metrics"), "expected array");
      }
      for (std::size_t m = 0; m < metrics->size(); ++m) {
        const nlohmann::json& mj = (*metrics)[m];
        std::string mpath = turn_path(i) + ".eval_config.metrics[" + std::to_string(m) + "]";
        if (!mj.is_object()) throw SchemaError(mpath, "expected object");
        MetricSpec spec;
        spec.class_name = require_string(mj, "class_name", mpath + ".class_name");
        spec.args = object_or_default(mj, "args", mpath + ".args");
        t.eval_config.metrics.push_back(std::move(spec));
      }
    }

    t.turn_labels = object_or_default(tj, "turn_labels", turn_path(i, "turn_labels"));

    for (const auto& [k, v] : tj.items()) {
      if (kTurnKeys.count(k) == 0) extra[turn_path(i) + "." + k] = v;
    }
    d.dialog_turns.push_back(std::move(t));
  }

  if (!extra.empty()) d.dialog_raw_info["_extra"] = std::move(extra);
  return d;
}

Dialog parse_dialog(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  return dialog_from_json(j);
}

}  // namespace ude
