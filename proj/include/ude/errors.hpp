#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ude {

// Base class for every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
std::string join_problems(const std::vector<std::string>& problems);
}

// --- schema ---

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

// Structural schema problem (missing key, wrong type). Carries the offending path.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class SerializationError : public Error {
 public:
  explicit SerializationError(const std::string& what) : Error(what) {}
};

// --- adapters ---

class DuplicateAdapterError : public Error {
 public:
  explicit DuplicateAdapterError(const std::string& id)
      : Error("adapter already registered: " + id) {}
};

class UnknownAdapterError : public Error {
 public:
  explicit UnknownAdapterError(const std::string& id) : Error("unknown adapter: " + id) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// An adapter emitted a Dialog that fails validation (adapter bug, not a data problem).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

// One or more raw records could not be mapped. Carries every bad record.
class AdapterError : public Error {
 public:
  struct RecordIssue {
    std::size_t record_index = 0;
    std::string reason;
  };

  AdapterError(const std::string& adapter_id, std::vector<RecordIssue> issues)
      : Error(format(adapter_id, issues)), issues_(std::move(issues)) {}

  const std::vector<RecordIssue>& issues() const { return issues_; }

 private:
  static std::string format(const std::string& adapter_id,
                            const std::vector<RecordIssue>& issues);
  std::vector<RecordIssue> issues_;
};

// --- connectors ---

class SessionAlreadyOpenError : public Error {
 public:
  explicit SessionAlreadyOpenError(const std::string& dialog_id)
      : Error("session already open for dialog: " + dialog_id) {}
};

class SessionClosedError : public Error {
 public:
  explicit SessionClosedError(const std::string& what) : Error(what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(what) {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& what) : Error(what) {}
};

// Non-2xx response from the provider; the body is kept for diagnosis.
class ProviderError : public Error {
 public:
  ProviderError(int status, const std::string& body)
      : Error("provider returned status " + std::to_string(status) + ": " + body),
        status_(status),
        body_(body) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

// --- generation ---

class MissingPredictionError : public Error {
 public:
  explicit MissingPredictionError(const std::string& turn_id)
      : Error("no prediction available for earlier assistant turn: " + turn_id) {}
};

// --- metrics ---

class DuplicateMetricError : public Error {
 public:
  explicit DuplicateMetricError(const std::string& name)
      : Error("metric already registered: " + name) {}
};

class UnknownMetricError : public Error {
 public:
  explicit UnknownMetricError(const std::string& name) : Error("unknown metric: " + name) {}
};

class BadMetricArgsError : public Error {
 public:
  BadMetricArgsError(const std::string& metric, std::string arg, const std::string& reason)
      : Error(metric + ": bad arg '" + arg + "': " + reason), arg_(std::move(arg)) {}
  const std::string& arg() const { return arg_; }

 private:
  std::string arg_;
};

class MissingReferenceError : public Error {
 public:
  explicit MissingReferenceError(const std::string& what) : Error(what) {}
};

class JudgeTransportError : public Error {
 public:
  explicit JudgeTransportError(const std::string& what) : Error(what) {}
};

class JudgeParseError : public Error {
 public:
  explicit JudgeParseError(const std::string& what) : Error(what) {}
};

class NoInstructionsError : public Error {
 public:
  explicit NoInstructionsError(const std::string& what) : Error(what) {}
};

class UnknownInstructionTypeError : public Error {
 public:
  explicit UnknownInstructionTypeError(const std::string& type)
      : Error("unknown instruction type: " + type) {}
};

class NoRulesError : public Error {
 public:
  explicit NoRulesError(const std::string& what) : Error(what) {}
};

class BadPatternError : public Error {
 public:
  explicit BadPatternError(const std::string& what) : Error(what) {}
};

// --- aggregation ---

class EmptyPoolError : public Error {
 public:
  explicit EmptyPoolError(const std::string& what) : Error(what) {}
};

// --- pipeline ---

// Pre-run validation failure; lists every problem found.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::vector<std::string>& problems)
      : Error(detail::join_problems(problems)), problems_(problems) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

class PhaseError : public Error {
 public:
  PhaseError(std::string phase, const std::string& what)
      : Error("[" + phase + "] " + what), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

}  // namespace ude
