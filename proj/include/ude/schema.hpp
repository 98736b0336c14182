#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ude/errors.hpp"

namespace ude {

// Message author. Only these three roles are representable.
enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view text);

// One metric invocation request: registry key plus keyword arguments.
struct MetricSpec {
  std::string class_name;
  nlohmann::json args = nlohmann::json::object();

  bool operator==(const MetricSpec&) const = default;
};

struct TurnEvalConfig {
  bool do_eval = false;
  std::vector<MetricSpec> metrics;

  bool operator==(const TurnEvalConfig&) const = default;
};

struct Turn {
  std::string turn_id;
  Role role = Role::User;
  std::string content;
  std::optional<std::string> reference;
  std::optional<std::string> reference_document;
  TurnEvalConfig eval_config;
  nlohmann::json turn_labels = nlohmann::json::object();

  bool operator==(const Turn&) const = default;
};

struct DialogEvalConfig {
  // true: later assistant turns are replayed from the dataset; false: on-policy,
  // the model's own earlier predictions are fed back as context.
  bool use_reference_history = true;

  bool operator==(const DialogEvalConfig&) const = default;
};

// One multi-turn session in the unified schema. Immutable by convention after
// construction; safe to share across workers.
struct Dialog {
  std::string dialog_id;
  nlohmann::json dialog_raw_info = nlohmann::json::object();
  nlohmann::json dialog_labels = nlohmann::json::object();
  DialogEvalConfig dialog_eval_config;
  std::vector<Turn> dialog_turns;

  bool operator==(const Dialog&) const = default;
};

struct Violation {
  std::string path;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

// Checks every schema invariant and returns one entry per violation, each with
// a path string such as "dialog_turns[3].role". Empty report means valid.
ValidationReport validate_dialog(const Dialog& d);

// Canonical JSON serialization: fixed key order, absent optionals emitted as
// null, compact one-line output (JSONL friendly). Throws SerializationError if
// a label value cannot be represented in JSON (e.g. non-finite numbers).
std::string serialize_dialog(const Dialog& d);

// Parses canonical (or near-canonical) dialog JSON. Unknown keys are preserved
// into dialog_raw_info under "_extra". Throws ParseError on malformed JSON and
// SchemaError (with the offending path) on missing/ill-typed fields.
Dialog parse_dialog(const std::string& text);

// Same, from an already-parsed JSON value.
Dialog dialog_from_json(const nlohmann::json& j);

nlohmann::ordered_json dialog_to_json(const Dialog& d);

// Convention for adapters that must synthesize turn ids: "t000", "t001", ...
std::string auto_turn_id(std::size_t ordinal);

}  // namespace ude
