#include "ude/memory_agent.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace ude {

namespace {

std::set<std::string> tokenize(const std::string& text) {
  std::set<std::string> tokens;
  std::string current;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.insert(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.insert(std::move(current));
  return tokens;
}

}  // namespace

double lexical_overlap(const std::string& query, const std::string& unit_text) {
  std::set<std::string> q = tokenize(query);
  if (q.empty()) return 0.0;
  std::set<std::string> u = tokenize(unit_text);
  std::size_t shared = 0;
  for (const std::string& token : q) {
    if (u.count(token) != 0) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(q.size());
}

RetrievalPolicy RetrievalPolicy::from_json(const nlohmann::json& j) {
  RetrievalPolicy p;
  if (!j.is_object()) return p;
  if (j.contains("k_short")) p.k_short = j["k_short"].get<int>();
  if (j.contains("k_long")) p.k_long = j["k_long"].get<int>();
  if (j.contains("turn_threshold")) p.turn_threshold = j["turn_threshold"].get<int>();
  if (j.contains("scorer")) p.scorer = j["scorer"].get<std::string>();
  return p;
}

MemoryAgentConnector::MemoryAgentConnector(std::shared_ptr<Connector> inner,
                                           MemoryAgentOptions options)
    : inner_(std::move(inner)), options_(std::move(options)) {}

MemoryAgentConnector::State& MemoryAgentConnector::state_for(const ConnectorSession& session) {
  auto it = states_.find(session.session_id());
  if (it == states_.end()) {
    throw SessionClosedError("no open memory-agent session: " + session.session_id());
  }
  return it->second;
}

const MemoryAgentConnector::State& MemoryAgentConnector::state_for(
    const ConnectorSession& session) const {
  auto it = states_.find(session.session_id());
  if (it == states_.end()) {
    throw SessionClosedError("no open memory-agent session: " + session.session_id());
  }
  return it->second;
}

void MemoryAgentConnector::on_begin(const ConnectorSession& session, const SessionInfo& info) {
  State state;
  state.inner_session = inner_->begin_dialog(session.dialog_id(), info);
  state.dialog_turn_count = info.dialog_turn_count;
  std::lock_guard<std::mutex> lock(mu_);
  states_.emplace(session.session_id(), std::move(state));
}

void MemoryAgentConnector::on_end(const ConnectorSession& session) {
  ConnectorSession inner_session;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = states_.find(session.session_id());
    if (it == states_.end()) return;
    inner_session = it->second.inner_session;
    states_.erase(it);  // the retrieval store dies with the dialog
  }
  inner_->end_dialog(inner_session);
}

void MemoryAgentConnector::store_unit(const ConnectorSession& session, const MemoryUnit& unit) {
  if (!session.open()) throw SessionClosedError("store_unit on closed session");
  std::lock_guard<std::mutex> lock(mu_);
  State& state = state_for(session);
  state.units.push_back(unit);
  state.next_unit_id = std::max(state.next_unit_id, unit.unit_id + 1);
}

std::size_t MemoryAgentConnector::store_size(const ConnectorSession& session) const {
  if (!session.open()) throw SessionClosedError("store_size on closed session");
  std::lock_guard<std::mutex> lock(mu_);
  return state_for(session).units.size();
}

std::vector<MemoryUnit> MemoryAgentConnector::retrieve(const ConnectorSession& session,
                                                       const std::string& query,
                                                       const RetrievalPolicy& policy,
                                                       int dialog_turn_count) const {
  if (!session.open()) throw SessionClosedError("retrieve on closed session");
  std::vector<MemoryUnit> units;
  {
    std::lock_guard<std::mutex> lock(mu_);
    units = state_for(session).units;
  }

  int k = dialog_turn_count < policy.turn_threshold ? policy.k_short : policy.k_long;
  if (k <= 0 || units.empty()) return {};

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    double score = lexical_overlap(query, units[i].user_text + " " + units[i].assistant_text);
    scored.emplace_back(score, i);
  }
  // Rank by score descending; ties broken by lower unit_id first.
  std::stable_sort(scored.begin(), scored.end(), [&units](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return units[a.second].unit_id < units[b.second].unit_id;
  });

  std::vector<MemoryUnit> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < static_cast<std::size_t>(k); ++i) {
    out.push_back(units[scored[i].second]);
  }
  return out;
}

GenerationOutcome MemoryAgentConnector::do_generate(const ConnectorSession& session,
                                                    const std::vector<Message>& context,
                                                    const GenerationParams& params) {
  int turn_count;
  ConnectorSession inner_session;
  {
    std::lock_guard<std::mutex> lock(mu_);
    State& state = state_for(session);
    turn_count = state.dialog_turn_count;
    inner_session = state.inner_session;
  }

  const Message& current = context.back();
  std::vector<MemoryUnit> retrieved =
      retrieve(session, current.content, options_.policy, turn_count);
  // Render chronologically regardless of retrieval rank.
  std::sort(retrieved.begin(), retrieved.end(),
            [](const MemoryUnit& a, const MemoryUnit& b) { return a.unit_id < b.unit_id; });

  std::vector<Message> inner_context;
  if (!context.empty() && context.front().role == Role::System) {
    inner_context.push_back(context.front());
  }
  if (options_.render_mode == "system_block") {
    if (!retrieved.empty()) {
      std::ostringstream block;
      block << "Relevant earlier exchanges:";
      for (const MemoryUnit& unit : retrieved) {
        block << "\n\nuser: " << unit.user_text << "\nassistant: " << unit.assistant_text;
      }
      inner_context.push_back({Role::System, block.str()});
    }
  } else {
    for (const MemoryUnit& unit : retrieved) {
      inner_context.push_back({Role::User, unit.user_text});
      inner_context.push_back({Role::Assistant, unit.assistant_text});
    }
  }
  inner_context.push_back(current);

  GenerationOutcome outcome = inner_->generate_outcome(inner_session, inner_context, params);

  MemoryUnit unit;
  unit.user_text = current.content;
  unit.assistant_text = outcome.text;
  unit.turn_index = static_cast<int>(context.size()) - 1;
  {
    std::lock_guard<std::mutex> lock(mu_);
    State& state = state_for(session);
    unit.unit_id = state.next_unit_id++;
    state.units.push_back(unit);
  }
  return outcome;
}

}  // namespace ude
