#include "ude/connectors.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace ude {

namespace {

void require_context_shape(const std::vector<Message>& context) {
  if (context.empty() || context.back().role != Role::User) {
    throw std::invalid_argument("generate requires a context ending with a user message");
  }
}

}  // namespace

GenerationParams GenerationParams::from_json(const nlohmann::json& j) {
  GenerationParams p;
  if (!j.is_object()) return p;
  if (j.contains("max_new_tokens")) p.max_new_tokens = j["max_new_tokens"].get<int>();
  if (j.contains("temperature")) p.temperature = j["temperature"].get<double>();
  if (j.contains("timeout_seconds")) p.timeout_seconds = j["timeout_seconds"].get<double>();
  if (j.contains("max_retries")) p.max_retries = j["max_retries"].get<int>();
  return p;
}

nlohmann::ordered_json GenerationParams::to_json() const {
  return nlohmann::ordered_json{{"max_new_tokens", max_new_tokens},
                                {"temperature", temperature},
                                {"timeout_seconds", timeout_seconds},
                                {"max_retries", max_retries}};
}

ConnectorSession Connector::begin_dialog(const std::string& dialog_id, const SessionInfo& info) {
  ConnectorSession session;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!open_dialogs_.insert(dialog_id).second) throw SessionAlreadyOpenError(dialog_id);
    session.session_id_ = dialog_id + "#" + std::to_string(next_session_serial_++);
  }
  session.dialog_id_ = dialog_id;
  session.open_ = true;
  begins_.fetch_add(1);
  try {
    on_begin(session, info);
  } catch (...) {
    std::lock_guard<std::mutex> lock(mu_);
    open_dialogs_.erase(dialog_id);
    ends_.fetch_add(1);
    throw;
  }
  return session;
}

std::string Connector::generate(ConnectorSession& session, const std::vector<Message>& context,
                                const GenerationParams& params) {
  return generate_outcome(session, context, params).text;
}

GenerationOutcome Connector::generate_outcome(ConnectorSession& session,
                                              const std::vector<Message>& context,
                                              const GenerationParams& params) {
  if (!session.open_) {
    throw SessionClosedError("generate on closed session for dialog: " + session.dialog_id_);
  }
  require_context_shape(context);
  generates_.fetch_add(1);
  return do_generate(session, context, params);
}

void Connector::end_dialog(ConnectorSession& session) {
  if (!session.open_) {
    throw SessionClosedError("end_dialog on closed session for dialog: " + session.dialog_id_);
  }
  session.open_ = false;
  {
    std::lock_guard<std::mutex> lock(mu_);
    open_dialogs_.erase(session.dialog_id_);
  }
  ends_.fetch_add(1);
  on_end(session);
}

void Connector::on_begin(const ConnectorSession&, const SessionInfo&) {}
void Connector::on_end(const ConnectorSession&) {}

// --- scripted ---

ScriptedConnector::ScriptedConnector(ScriptedOptions options) : options_(std::move(options)) {}

ScriptedOptions ScriptedConnector::options_from_json(const nlohmann::json& j) {
  ScriptedOptions o;
  if (!j.is_object()) return o;
  if (j.contains("mode")) o.mode = j["mode"].get<std::string>();
  if (j.contains("prefix")) o.prefix = j["prefix"].get<std::string>();
  if (j.contains("fallback")) o.fallback = j["fallback"].get<std::string>();
  if (j.contains("latency_ms")) o.latency_ms = j["latency_ms"].get<double>();
  if (j.contains("capture")) o.capture = j["capture"].get<bool>();
  if (j.contains("table") && j["table"].is_object()) {
    for (const auto& [k, v] : j["table"].items()) o.table[k] = v.get<std::string>();
  }
  if (j.contains("fail_dialogs") && j["fail_dialogs"].is_array()) {
    for (const auto& v : j["fail_dialogs"]) o.fail_dialogs.insert(v.get<std::string>());
  }
  return o;
}

std::vector<ScriptedConnector::Capture> ScriptedConnector::captures() const {
  std::lock_guard<std::mutex> lock(capture_mu_);
  return captures_;
}

GenerationOutcome ScriptedConnector::do_generate(const ConnectorSession& session,
                                                 const std::vector<Message>& context,
                                                 const GenerationParams&) {
  if (options_.latency_ms > 0.0) {
    std::this_thread::sleep_for(
        std::chrono::microseconds(static_cast<std::int64_t>(options_.latency_ms * 1000.0)));
  }
  if (options_.capture) {
    std::lock_guard<std::mutex> lock(capture_mu_);
    captures_.push_back({session.dialog_id(), context});
  }
  if (options_.fail_dialogs.count(session.dialog_id()) != 0) {
    throw TransportError("scripted failure injected for dialog: " + session.dialog_id());
  }

  const std::string& last_user = context.back().content;
  if (options_.mode == "echo") {
    return {options_.prefix + last_user, 1};
  }
  if (options_.mode == "table") {
    auto it = options_.table.find(last_user);
    return {it == options_.table.end() ? options_.fallback : it->second, 1};
  }
  if (options_.mode == "hash") {
    // FNV-1a over the whole context; stable across runs and platforms.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::string_view text) {
      for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
      }
    };
    for (const Message& m : context) {
      mix(to_string(m.role));
      mix("\x1f");
      mix(m.content);
      mix("\x1e");
    }
    std::ostringstream os;
    os << std::hex << h;
    return {os.str(), 1};
  }
  throw TransportError("scripted connector: unknown mode '" + options_.mode + "'");
}

// --- openai compatible ---

OpenAiCompatibleConnector::OpenAiCompatibleConnector(OpenAiOptions options)
    : options_(std::move(options)) {}

OpenAiOptions OpenAiCompatibleConnector::options_from_json(const nlohmann::json& j) {
  OpenAiOptions o;
  if (!j.is_object()) return o;
  if (j.contains("base_url")) o.base_url = j["base_url"].get<std::string>();
  if (j.contains("model")) o.model = j["model"].get<std::string>();
  if (j.contains("api_key_env")) o.api_key_env = j["api_key_env"].get<std::string>();
  if (j.contains("backoff_base_seconds")) {
    o.backoff_base_seconds = j["backoff_base_seconds"].get<double>();
  }
  return o;
}

std::string OpenAiCompatibleConnector::request_body(const std::string& model,
                                                    const std::vector<Message>& context,
                                                    const GenerationParams& params) {
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const Message& m : context) {
    messages.push_back(nlohmann::ordered_json{{"role", std::string(to_string(m.role))},
                                              {"content", m.content}});
  }
  nlohmann::ordered_json body{{"model", model},
                              {"messages", std::move(messages)},
                              {"max_tokens", params.max_new_tokens},
                              {"temperature", params.temperature}};
  return body.dump();
}

namespace {

struct SplitUrl {
  std::string host;        // scheme://authority
  std::string path_prefix; // leading path, no trailing slash
};

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("base_url must start with http:// or https://: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.host = base_url;
  } else {
    out.host = base_url.substr(0, path_start);
    out.path_prefix = base_url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

GenerationOutcome OpenAiCompatibleConnector::do_generate(const ConnectorSession&,
                                                         const std::vector<Message>& context,
                                                         const GenerationParams& params) {
  const SplitUrl url = split_base_url(options_.base_url);
  const std::string path = url.path_prefix + "/chat/completions";
  const std::string body = request_body(options_.model, context, params);

  httplib::Headers headers;
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const int attempts = std::max(1, params.max_retries);
  std::string last_failure = "no attempt made";
  bool last_was_timeout = false;
  int last_status = 0;
  std::string last_body;

  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(url.host);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::duration<double>(params.timeout_seconds)));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::duration<double>(params.timeout_seconds)));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::duration<double>(params.timeout_seconds)));

    auto started = std::chrono::steady_clock::now();
    httplib::Result res = client.Post(path, headers, body, "application/json");
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (res) {
      if (res->status >= 200 && res->status < 300) {
        nlohmann::json parsed;
        try {
          parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
          throw ProviderError(res->status, "unparsable response body: " + res->body);
        }
        if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
            parsed["choices"].empty() || !parsed["choices"][0].contains("message") ||
            !parsed["choices"][0]["message"].contains("content") ||
            !parsed["choices"][0]["message"]["content"].is_string()) {
          throw ProviderError(res->status, "response missing choices[0].message.content");
        }
        return {parsed["choices"][0]["message"]["content"].get<std::string>(), attempt};
      }
      if (!retryable_status(res->status)) throw ProviderError(res->status, res->body);
      last_status = res->status;
      last_body = res->body;
      last_failure = "status " + std::to_string(res->status);
      last_was_timeout = false;
    } else {
      last_failure = httplib::to_string(res.error());
      last_was_timeout = res.error() == httplib::Error::ConnectionTimeout ||
                         ((res.error() == httplib::Error::Read ||
                           res.error() == httplib::Error::Write) &&
                          elapsed >= 0.9 * params.timeout_seconds);
    }

    if (attempt < attempts) {
      double delay = options_.backoff_base_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }

  if (last_status != 0) throw ProviderError(last_status, last_body);
  if (last_was_timeout) {
    throw TimeoutError("request timed out after " + std::to_string(attempts) +
                       " attempts: " + last_failure);
  }
  throw TransportError("transport failure after " + std::to_string(attempts) +
                       " attempts: " + last_failure);
}

}  // namespace ude
