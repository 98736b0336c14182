#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ude/connectors.hpp"

namespace ude {

// One stored user-assistant exchange.
struct MemoryUnit {
  int unit_id = 0;
  std::string user_text;
  std::string assistant_text;
  int turn_index = 0;

  bool operator==(const MemoryUnit&) const = default;
};

struct RetrievalPolicy {
  int k_short = 3;
  int k_long = 10;
  // Dialogs with fewer turns than this use k_short, all others k_long.
  int turn_threshold = 10;
  std::string scorer = "lexical_overlap";

  static RetrievalPolicy from_json(const nlohmann::json& j);
};

struct MemoryAgentOptions {
  RetrievalPolicy policy;
  // "pairs": retrieved exchanges become real user/assistant message pairs;
  // "system_block": they are rendered into a single system message.
  std::string render_mode = "pairs";
};

// |tokens(query) ∩ tokens(unit_text)| / |tokens(query)| with case-folded
// whitespace tokenization over distinct tokens. Empty queries score 0.
double lexical_overlap(const std::string& query, const std::string& unit_text);

// Baseline memory-augmented agent over any inner connector. Each completed
// exchange is stored as one MemoryUnit; each query retrieves the top-k units
// and rebuilds the inner context from them plus the current user message only.
// Earlier raw history is not passed through.
class MemoryAgentConnector : public Connector {
 public:
  MemoryAgentConnector(std::shared_ptr<Connector> inner, MemoryAgentOptions options = {});

  std::string name() const override { return "memory_agent(" + inner_->name() + ")"; }

  void store_unit(const ConnectorSession& session, const MemoryUnit& unit);
  std::vector<MemoryUnit> retrieve(const ConnectorSession& session, const std::string& query,
                                   const RetrievalPolicy& policy, int dialog_turn_count) const;
  std::size_t store_size(const ConnectorSession& session) const;

  const std::shared_ptr<Connector>& inner() const { return inner_; }

 protected:
  void on_begin(const ConnectorSession& session, const SessionInfo& info) override;
  GenerationOutcome do_generate(const ConnectorSession& session,
                                const std::vector<Message>& context,
                                const GenerationParams& params) override;
  void on_end(const ConnectorSession& session) override;

 private:
  struct State {
    std::vector<MemoryUnit> units;
    ConnectorSession inner_session;
    int dialog_turn_count = 0;
    int next_unit_id = 0;
  };

  State& state_for(const ConnectorSession& session);
  const State& state_for(const ConnectorSession& session) const;

  std::shared_ptr<Connector> inner_;
  MemoryAgentOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, State> states_;  // keyed by session_id
};

}  // namespace ude
