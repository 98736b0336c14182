#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ude/schema.hpp"

namespace ude {

struct Message {
  Role role = Role::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct GenerationParams {
  int max_new_tokens = 1024;
  double temperature = 0.0;
  double timeout_seconds = 120.0;
  // Total request attempts per generate call (first try included).
  int max_retries = 3;

  static GenerationParams from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

// Dialog metadata handed to the connector at session start. Memory agents use
// the turn count to pick their retrieval depth.
struct SessionInfo {
  int dialog_turn_count = 0;
};

// Stateful handle for one dialog's generation lifecycle. Confined to a single
// worker at a time; all connector-held state dies with end_dialog.
class ConnectorSession {
 public:
  ConnectorSession() = default;
  const std::string& session_id() const { return session_id_; }
  const std::string& dialog_id() const { return dialog_id_; }
  bool open() const { return open_; }

 private:
  friend class Connector;
  std::string session_id_;
  std::string dialog_id_;
  bool open_ = false;
};

struct GenerationOutcome {
  std::string text;
  int request_count = 1;
};

// Uniform connector contract. The base class owns the lifecycle bookkeeping
// (one open session per dialog_id per handle) and the audit counters; concrete
// connectors implement do_generate and the optional session hooks.
// A connector handle is safe for concurrent use across sessions.
class Connector {
 public:
  virtual ~Connector() = default;

  virtual std::string name() const = 0;

  ConnectorSession begin_dialog(const std::string& dialog_id, const SessionInfo& info = {});
  std::string generate(ConnectorSession& session, const std::vector<Message>& context,
                       const GenerationParams& params);
  GenerationOutcome generate_outcome(ConnectorSession& session,
                                     const std::vector<Message>& context,
                                     const GenerationParams& params);
  void end_dialog(ConnectorSession& session);

  // Lifecycle audit counters (totals across all sessions of this handle).
  std::uint64_t begin_calls() const { return begins_.load(); }
  std::uint64_t end_calls() const { return ends_.load(); }
  std::uint64_t generate_calls() const { return generates_.load(); }

 protected:
  virtual void on_begin(const ConnectorSession& session, const SessionInfo& info);
  virtual GenerationOutcome do_generate(const ConnectorSession& session,
                                        const std::vector<Message>& context,
                                        const GenerationParams& params) = 0;
  virtual void on_end(const ConnectorSession& session);

 private:
  mutable std::mutex mu_;
  std::set<std::string> open_dialogs_;
  std::uint64_t next_session_serial_ = 0;
  std::atomic<std::uint64_t> begins_{0};
  std::atomic<std::uint64_t> ends_{0};
  std::atomic<std::uint64_t> generates_{0};
};

// Deterministic in-process connector for tests and dry runs.
//   echo  - prefix + last user message
//   table - exact-match lookup of the last user message, with fallback text
//   hash  - stable digest of the whole context
struct ScriptedOptions {
  std::string mode = "echo";
  std::string prefix = "ECHO: ";
  std::map<std::string, std::string> table;
  std::string fallback;
  double latency_ms = 0.0;               // artificial per-call latency
  std::set<std::string> fail_dialogs;    // generate throws TransportError for these
  bool capture = false;                  // record every (dialog_id, context) seen
};

class ScriptedConnector : public Connector {
 public:
  explicit ScriptedConnector(ScriptedOptions options = {});

  static ScriptedOptions options_from_json(const nlohmann::json& j);

  std::string name() const override { return "scripted:" + options_.mode; }

  struct Capture {
    std::string dialog_id;
    std::vector<Message> context;
  };
  std::vector<Capture> captures() const;

 protected:
  GenerationOutcome do_generate(const ConnectorSession& session,
                                const std::vector<Message>& context,
                                const GenerationParams& params) override;

 private:
  ScriptedOptions options_;
  mutable std::mutex capture_mu_;
  std::vector<Capture> captures_;
};

// Chat-completions wire protocol client. Stateless between calls: the caller
// supplies the full context every turn. Retries transport failures, 429 and
// 5xx with exponential backoff; other 4xx fail immediately.
struct OpenAiOptions {
  std::string base_url;           // e.g. "http://localhost:8000/v1"
  std::string model;
  std::string api_key_env;        // name of the env var holding the bearer token
  double backoff_base_seconds = 1.0;
};

class OpenAiCompatibleConnector : public Connector {
 public:
  explicit OpenAiCompatibleConnector(OpenAiOptions options);

  static OpenAiOptions options_from_json(const nlohmann::json& j);

  std::string name() const override { return "openai_compatible:" + options_.model; }

  // Exposed for tests: the exact request body for a context/params pair.
  static std::string request_body(const std::string& model, const std::vector<Message>& context,
                                  const GenerationParams& params);

 protected:
  GenerationOutcome do_generate(const ConnectorSession& session,
                                const std::vector<Message>& context,
                                const GenerationParams& params) override;

 private:
  OpenAiOptions options_;
};

}  // namespace ude
