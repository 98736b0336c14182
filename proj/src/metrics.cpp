#include "ude/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "ude/worker_pool.hpp"

namespace ude {

namespace {

// --- argument validation ---

enum class ArgKind { Bool, Int, Number, String };

const char* kind_name(ArgKind kind) {
  switch (kind) {
    case ArgKind::Bool:
      return "boolean";
    case ArgKind::Int:
      return "integer";
    case ArgKind::Number:
      return "number";
    case ArgKind::String:
      return "string";
  }
  return "value";
}

void check_args(const std::string& metric, const nlohmann::json& args,
                const std::map<std::string, ArgKind>& schema) {
  if (args.is_null()) return;
  if (!args.is_object()) throw BadMetricArgsError(metric, "args", "must be an object");
  for (const auto& [key, value] : args.items()) {
    auto it = schema.find(key);
    if (it == schema.end()) throw BadMetricArgsError(metric, key, "unknown argument");
    bool ok = false;
    switch (it->second) {
      case ArgKind::Bool:
        ok = value.is_boolean();
        break;
      case ArgKind::Int:
        ok = value.is_number_integer();
        break;
      case ArgKind::Number:
        ok = value.is_number();
        break;
      case ArgKind::String:
        ok = value.is_string();
        break;
    }
    if (!ok) {
      throw BadMetricArgsError(metric, key,
                               std::string("expected ") + kind_name(it->second) + ", got " +
                                   std::string(value.type_name()));
    }
  }
}

// --- text helpers ---

std::string ascii_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char raw : s) {
    if (std::isspace(static_cast<unsigned char>(raw))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      in_space = false;
      out.push_back(raw);
    }
  }
  return out;
}

std::size_t count_words(const std::string& s) {
  std::istringstream is(s);
  std::string word;
  std::size_t n = 0;
  while (is >> word) ++n;
  return n;
}

// --- exact_match ---

class ExactMatchMetric final : public Metric {
 public:
  ExactMatchMetric(const nlohmann::json& args) {
    check_args("exact_match", args,
               {{"mode", ArgKind::String},
                {"case_fold", ArgKind::Bool},
                {"trim", ArgKind::Bool},
                {"collapse_whitespace", ArgKind::Bool},
                {"strip_punct", ArgKind::Bool},
                {"reference_free", ArgKind::Bool}});
    mode_ = args.value("mode", "strict");
    if (mode_ != "strict" && mode_ != "contains") {
      throw BadMetricArgsError("exact_match", "mode", "must be 'strict' or 'contains'");
    }
    case_fold_ = args.value("case_fold", true);
    trim_ = args.value("trim", true);
    collapse_ = args.value("collapse_whitespace", true);
    strip_punct_ = args.value("strip_punct", true);
  }

  std::string name() const override { return "exact_match"; }

  std::string normalize(const std::string& text) const {
    std::string s = text;
    if (case_fold_) s = ascii_lower(s);
    if (trim_) s = trim(s);
    if (collapse_) s = collapse_whitespace(s);
    if (strip_punct_) {
      while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!')) s.pop_back();
      while (!s.empty() && s.back() == ' ') s.pop_back();
    }
    return s;
  }

  std::optional<ScoreRecord> score(const TurnContext& ctx) override {
    if (!ctx.reference) {
      throw MissingReferenceError("exact_match requires a reference for turn " + ctx.turn_id);
    }
    std::string pred = normalize(ctx.prediction);
    std::string ref = normalize(*ctx.reference);
    bool hit = mode_ == "strict" ? pred == ref : pred.find(ref) != std::string::npos;
    nlohmann::json detail{{"mode", mode_},
                          {"normalized_prediction", pred},
                          {"normalized_reference", ref}};
    return make_score_record(ctx.dialog_id, ctx.turn_id, name(), hit ? 1.0 : 0.0,
                             std::move(detail));
  }

 private:
  std::string mode_;
  bool case_fold_ = true;
  bool trim_ = true;
  bool collapse_ = true;
  bool strip_punct_ = true;
};

// --- llm_judge ---

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

class LlmJudgeMetric final : public Metric {
 public:
  LlmJudgeMetric(const nlohmann::json& args, const JudgeRuntime& runtime) : runtime_(runtime) {
    check_args("llm_judge", args,
               {{"template", ArgKind::String},
                {"scale_max", ArgKind::Int},
                {"reference_free", ArgKind::Bool}});
    scale_max_ = args.value("scale_max", 10);
    if (scale_max_ < 2) throw BadMetricArgsError("llm_judge", "scale_max", "must be >= 2");
    if (args.contains("template")) template_ = args["template"].get<std::string>();
    if (template_.empty()) template_ = runtime.template_text;
    if (template_.empty()) template_ = default_judge_template();
    if (!runtime_.judge) {
      throw ConfigError({"judge.connector: required because the dataset requests llm_judge"});
    }
  }

  std::string name() const override { return "llm_judge"; }

  std::string fill_template(const TurnContext& ctx) const {
    std::ostringstream history;
    for (std::size_t i = 0; i + 1 < ctx.history.size(); ++i) {
      if (i > 0) history << "\n";
      history << to_string(ctx.history[i].role) << ": " << ctx.history[i].content;
    }
    std::string question = ctx.history.empty() ? "" : ctx.history.back().content;

    std::string text = template_;
    text = replace_all(text, "{history}", history.str());
    text = replace_all(text, "{question}", question);
    text = replace_all(text, "{reference}", ctx.reference.value_or("(no reference provided)"));
    text = replace_all(text, "{response}", ctx.prediction);
    return text;
  }

  // Last occurrence of [[integer]], valid only within 1..scale_max.
  std::optional<int> parse_rating(const std::string& reply) const {
    static const std::regex pattern(R"(\[\[(\d{1,9})\]\])");
    std::optional<int> rating;
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), pattern);
         it != std::sregex_iterator(); ++it) {
      int value = std::stoi((*it)[1].str());
      if (value >= 1 && value <= scale_max_) rating = value;
    }
    return rating;
  }

  std::optional<ScoreRecord> score(const TurnContext& ctx) override {
    static std::atomic<std::uint64_t> serial{0};
    std::string judge_dialog_id =
        "judge:" + ctx.dialog_id + ":" + ctx.turn_id + "#" + std::to_string(serial.fetch_add(1));
    std::vector<Message> judge_context = {{Role::User, fill_template(ctx)}};

    ConnectorSession session = runtime_.judge->begin_dialog(judge_dialog_id);
    std::string reply;
    std::optional<int> rating;
    try {
      int asks = 1 + std::max(0, runtime_.parse_retries);
      for (int attempt = 0; attempt < asks && !rating; ++attempt) {
        reply = runtime_.judge->generate(session, judge_context, runtime_.params);
        rating = parse_rating(reply);
      }
    } catch (const Error& e) {
      runtime_.judge->end_dialog(session);
      throw JudgeTransportError(e.what());
    }
    runtime_.judge->end_dialog(session);

    if (!rating) {
      if (runtime_.on_parse_failure == "skip") return std::nullopt;
      if (runtime_.on_parse_failure == "error") {
        throw JudgeParseError("no rating of the form [[1.." + std::to_string(scale_max_) +
                              "]] in judge reply: " + reply);
      }
      return make_score_record(ctx.dialog_id, ctx.turn_id, name(), 0.0,
                               {{"judge_raw", reply}, {"parse_failed", true}});
    }
    double value = static_cast<double>(*rating - 1) / static_cast<double>(scale_max_ - 1);
    return make_score_record(ctx.dialog_id, ctx.turn_id, name(), value,
                             {{"judge_raw", reply}, {"rating", *rating}});
  }

 private:
  JudgeRuntime runtime_;
  std::string template_;
  int scale_max_ = 10;
};

// --- instruction_adherence ---

class InstructionAdherenceMetric final : public Metric {
 public:
  explicit InstructionAdherenceMetric(const nlohmann::json& args) {
    check_args("instruction_adherence", args, {{"reference_free", ArgKind::Bool}});
  }

  std::string name() const override { return "instruction_adherence"; }

  static int int_arg(const nlohmann::json& inst, const char* key) {
    if (!inst.contains("args") || !inst["args"].is_object() || !inst["args"].contains(key) ||
        !inst["args"][key].is_number_integer()) {
      throw BadMetricArgsError("instruction_adherence", key, "instruction needs integer arg");
    }
    return inst["args"][key].get<int>();
  }

  static std::string text_arg(const nlohmann::json& inst, const char* key) {
    if (!inst.contains("args") || !inst["args"].is_object() || !inst["args"].contains(key) ||
        !inst["args"][key].is_string()) {
      throw BadMetricArgsError("instruction_adherence", key, "instruction needs string arg");
    }
    return inst["args"][key].get<std::string>();
  }

  static bool check(const nlohmann::json& inst, const std::string& prediction) {
    std::string type = inst.value("type", "");
    std::string trimmed = trim(prediction);
    if (type == "max_words") return count_words(prediction) <= static_cast<std::size_t>(int_arg(inst, "n"));
    if (type == "min_words") return count_words(prediction) >= static_cast<std::size_t>(int_arg(inst, "n"));
    if (type == "contains") return prediction.find(text_arg(inst, "text")) != std::string::npos;
    if (type == "not_contains") return prediction.find(text_arg(inst, "text")) == std::string::npos;
    if (type == "starts_with") return trimmed.rfind(text_arg(inst, "text"), 0) == 0;
    if (type == "ends_with") {
      std::string suffix = text_arg(inst, "text");
      return trimmed.size() >= suffix.size() &&
             trimmed.compare(trimmed.size() - suffix.size(), suffix.size(), suffix) == 0;
    }
    if (type == "json_format") return nlohmann::json::accept(trimmed);
    if (type == "bullet_count") {
      int bullets = 0;
      std::istringstream lines(prediction);
      std::string line;
      while (std::getline(lines, line)) {
        if (line.rfind("- ", 0) == 0) ++bullets;
      }
      return bullets == int_arg(inst, "n");
    }
    throw UnknownInstructionTypeError(type.empty() ? "(missing type)" : type);
  }

  std::optional<ScoreRecord> score(const TurnContext& ctx) override {
    auto it = ctx.turn_labels.find("instructions");
    if (it == ctx.turn_labels.end() || !it->is_array() || it->empty()) {
      throw NoInstructionsError("turn " + ctx.turn_id +
                                " has no turn_labels.instructions list");
    }
    nlohmann::json results = nlohmann::json::array();
    std::size_t satisfied = 0;
    for (const auto& inst : *it) {
      bool ok = check(inst, ctx.prediction);
      if (ok) ++satisfied;
      results.push_back({{"type", inst.value("type", "")}, {"ok", ok}});
    }
    double value = static_cast<double>(satisfied) / static_cast<double>(it->size());
    return make_score_record(ctx.dialog_id, ctx.turn_id, name(), value,
                             {{"results", std::move(results)}});
  }
};

// --- math_answer ---

class MathAnswerMetric final : public Metric {
 public:
  explicit MathAnswerMetric(const nlohmann::json& args) {
    check_args("math_answer", args, {{"reference_free", ArgKind::Bool}});
  }

  std::string name() const override { return "math_answer"; }

  // Content of the last \boxed{...}, with brace matching for nested groups.
  static std::optional<std::string> last_boxed(const std::string& text) {
    std::size_t pos = text.rfind("\\boxed{");
    if (pos == std::string::npos) return std::nullopt;
    std::size_t start = pos + 7;
    int depth = 1;
    for (std::size_t i = start; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) return text.substr(start, i - start);
    }
    return text.substr(start);  // unbalanced; take the rest
  }

  static std::string strip_number_decoration(const std::string& text) {
    std::string out;
    for (char c : text) {
      if (c == ',' || c == '$' || c == '%' ||
          std::isspace(static_cast<unsigned char>(c))) {
        continue;
      }
      out.push_back(c);
    }
    return out;
  }

  static std::optional<double> parse_number(const std::string& text) {
    std::string s = strip_number_decoration(text);
    if (s.empty()) return std::nullopt;
    try {
      std::size_t used = 0;
      double value = std::stod(s, &used);
      if (used != s.size()) return std::nullopt;
      return value;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  static std::optional<std::string> last_numeric_literal(const std::string& text) {
    static const std::regex pattern(
        R"([-+]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?)");
    std::optional<std::string> last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
         it != std::sregex_iterator(); ++it) {
      last = it->str();
    }
    return last;
  }

  // Extraction: prefer the last \boxed{} group; else the last numeric literal.
  static std::optional<std::pair<std::string, double>> extract(const std::string& text) {
    if (auto boxed = last_boxed(text)) {
      if (auto direct = parse_number(*boxed)) return std::make_pair(*boxed, *direct);
      if (auto literal = last_numeric_literal(*boxed)) {
        if (auto value = parse_number(*literal)) return std::make_pair(*literal, *value);
      }
      return std::nullopt;
    }
    if (auto literal = last_numeric_literal(text)) {
      if (auto value = parse_number(*literal)) return std::make_pair(*literal, *value);
    }
    return std::nullopt;
  }

  std::optional<ScoreRecord> score(const TurnContext& ctx) override {
    if (!ctx.reference) {
      throw MissingReferenceError("math_answer requires a reference for turn " + ctx.turn_id);
    }
    auto ref = extract(*ctx.reference);
    if (!ref) {
      throw MissingReferenceError("math_answer reference does not parse to a number: " +
                                  *ctx.reference);
    }
    auto pred = extract(ctx.prediction);
    if (!pred) {
      return make_score_record(ctx.dialog_id, ctx.turn_id, name(), 0.0,
                               {{"extraction_failed", true},
                                {"extracted_reference", ref->first}});
    }

    bool hit;
    double err;
    if (ref->second == 0.0) {
      err = std::abs(pred->second);
      hit = err <= 1e-9;
    } else {
      err = std::abs(pred->second - ref->second) / std::abs(ref->second);
      hit = err <= 1e-4;
    }
    return make_score_record(ctx.dialog_id, ctx.turn_id, name(), hit ? 1.0 : 0.0,
                             {{"extracted_prediction", pred->first},
                              {"extracted_reference", ref->first},
                              {"error", err}});
  }
};

// --- code_rule ---

class CodeRuleMetric final : public Metric {
 public:
  explicit CodeRuleMetric(const nlohmann::json& args) {
    check_args("code_rule", args, {{"reference_free", ArgKind::Bool}});
  }

  std::string name() const override { return "code_rule"; }

  // Concatenated contents of all triple-backtick fences; the whole prediction
  // when there is no fence.
  static std::string code_blocks(const std::string& prediction) {
    std::string blocks;
    bool in_fence = false;
    bool any_fence = false;
    std::istringstream lines(prediction);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("```", 0) == 0) {
        any_fence = true;
        in_fence = !in_fence;
        continue;
      }
      if (in_fence) {
        if (!blocks.empty()) blocks.push_back('\n');
        blocks += line;
      }
    }
    return any_fence ? blocks : prediction;
  }

  std::optional<ScoreRecord> score(const TurnContext& ctx) override {
    auto it = ctx.turn_labels.find("code_rules");
    if (it == ctx.turn_labels.end() || !it->is_array() || it->empty()) {
      throw NoRulesError("turn " + ctx.turn_id + " has no turn_labels.code_rules list");
    }
    std::string target = code_blocks(ctx.prediction);

    nlohmann::json results = nlohmann::json::array();
    std::size_t satisfied = 0;
    for (const auto& rule : *it) {
      std::string pattern = rule.value("pattern", "");
      std::string polarity = rule.value("polarity", "must_match");
      if (polarity != "must_match" && polarity != "must_not_match") {
        throw BadPatternError("unknown polarity '" + polarity + "'");
      }
      std::unique_ptr<std::regex> re;
      try {
        re = std::make_unique<std::regex>(pattern);
      } catch (const std::regex_error& e) {
        throw BadPatternError("unparsable pattern '" + pattern + "': " + e.what());
      }
      bool matched = std::regex_search(target, *re);
      bool ok = polarity == "must_match" ? matched : !matched;
      if (ok) ++satisfied;
      results.push_back({{"pattern", pattern}, {"polarity", polarity}, {"ok", ok}});
    }
    double value = static_cast<double>(satisfied) / static_cast<double>(it->size());
    return make_score_record(ctx.dialog_id, ctx.turn_id, name(), value,
                             {{"results", std::move(results)}});
  }
};

}  // namespace

const std::string& default_judge_template() {
  static const std::string kTemplate =
      "You are an impartial judge evaluating the quality of an AI assistant's reply in a "
      "multi-turn conversation.\n"
      "\n"
      "[Conversation so far]\n"
      "{history}\n"
      "\n"
      "[Current user message]\n"
      "{question}\n"
      "\n"
      "[Reference answer]\n"
      "{reference}\n"
      "\n"
      "[Assistant reply to judge]\n"
      "{response}\n"
      "\n"
      "Judge the reply for correctness, helpfulness and coherence with the conversation. "
      "Briefly justify your judgement, then end your reply with exactly this line:\n"
      "Rating: [[x]]\n"
      "where x is an integer from 1 to 10.\n";
  return kTemplate;
}

nlohmann::ordered_json ScoreRecord::to_json() const {
  nlohmann::ordered_json out;
  out["dialog_id"] = dialog_id;
  out["turn_id"] = turn_id;
  out["metric_name"] = metric_name;
  out["score"] = score;
  out["detail"] = detail;
  return out;
}

ScoreRecord ScoreRecord::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("$", "score record must be an object");
  ScoreRecord rec;
  rec.dialog_id = j.at("dialog_id").get<std::string>();
  rec.turn_id = j.at("turn_id").get<std::string>();
  rec.metric_name = j.at("metric_name").get<std::string>();
  rec.score = j.at("score").get<double>();
  if (!(rec.score >= 0.0 && rec.score <= 1.0)) {
    throw SchemaError("score", "must lie in [0,1]");
  }
  if (j.contains("detail") && j["detail"].is_object()) rec.detail = j["detail"];
  return rec;
}

ScoreRecord make_score_record(std::string dialog_id, std::string turn_id, std::string metric_name,
                              double score, nlohmann::json detail) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw std::logic_error("score out of range [0,1]: " + std::to_string(score));
  }
  ScoreRecord rec;
  rec.dialog_id = std::move(dialog_id);
  rec.turn_id = std::move(turn_id);
  rec.metric_name = std::move(metric_name);
  rec.score = score;
  rec.detail = std::move(detail);
  return rec;
}

void MetricRegistry::register_metric(const std::string& name, MetricFactory factory) {
  std::lock_guard<std::mutex> lock(mu_);
  if (metrics_.count(name) != 0) throw DuplicateMetricError(name);
  metrics_[name] = std::move(factory);
}

bool MetricRegistry::has(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mu_);
  return metrics_.count(name) != 0;
}

std::vector<std::string> MetricRegistry::names() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, factory] : metrics_) out.push_back(name);
  return out;
}

std::unique_ptr<Metric> MetricRegistry::resolve(const MetricSpec& spec,
                                                const JudgeRuntime& runtime) const {
  MetricFactory factory;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = metrics_.find(spec.class_name);
    if (it == metrics_.end()) throw UnknownMetricError(spec.class_name);
    factory = it->second;
  }
  return factory(spec.args, runtime);
}

MetricRegistry& builtin_metrics() {
  static MetricRegistry registry;
  static const bool initialized = [] {
    registry.register_metric("exact_match", [](const nlohmann::json& args, const JudgeRuntime&) {
      return std::make_unique<ExactMatchMetric>(args);
    });
    registry.register_metric("llm_judge",
                             [](const nlohmann::json& args, const JudgeRuntime& runtime) {
                               return std::make_unique<LlmJudgeMetric>(args, runtime);
                             });
    registry.register_metric("instruction_adherence",
                             [](const nlohmann::json& args, const JudgeRuntime&) {
                               return std::make_unique<InstructionAdherenceMetric>(args);
                             });
    registry.register_metric("math_answer", [](const nlohmann::json& args, const JudgeRuntime&) {
      return std::make_unique<MathAnswerMetric>(args);
    });
    registry.register_metric("code_rule", [](const nlohmann::json& args, const JudgeRuntime&) {
      return std::make_unique<CodeRuleMetric>(args);
    });
    return true;
  }();
  (void)initialized;
  return registry;
}

namespace {

std::vector<ScoreRecord> evaluate_dialog(const Dialog& d, const GenerationRecord& gen,
                                         const MetricRegistry& registry,
                                         const JudgeRuntime& judge) {
  std::map<std::string, std::string> predictions = gen.predictions();
  auto dialog_ptr = std::make_shared<const Dialog>(d);

  std::vector<ScoreRecord> records;
  for (std::size_t i = 0; i < d.dialog_turns.size(); ++i) {
    const Turn& t = d.dialog_turns[i];
    if (t.role != Role::Assistant || !t.eval_config.do_eval) continue;

    TurnContext ctx;
    ctx.dialog_id = d.dialog_id;
    ctx.turn_id = t.turn_id;
    auto pred_it = predictions.find(t.turn_id);
    if (pred_it == predictions.end()) {
      // Complete records always cover every assistant turn; guard anyway.
      for (const MetricSpec& spec : t.eval_config.metrics) {
        records.push_back(make_score_record(d.dialog_id, t.turn_id, spec.class_name, 0.0,
                                            {{"error", "no prediction for turn"}}));
      }
      continue;
    }
    ctx.prediction = pred_it->second;
    ctx.history = build_context(d, i, predictions);
    ctx.reference = t.reference;
    ctx.reference_document = t.reference_document;
    ctx.turn_labels = t.turn_labels;
    ctx.dialog = dialog_ptr;

    for (const MetricSpec& spec : t.eval_config.metrics) {
      try {
        std::unique_ptr<Metric> metric = registry.resolve(spec, judge);
        std::optional<ScoreRecord> rec = metric->score(ctx);
        if (rec) records.push_back(std::move(*rec));
      } catch (const std::exception& e) {
        // Per-turn metric failure: recorded, not fatal (config errors were
        // caught in the pre-pass).
        records.push_back(make_score_record(d.dialog_id, t.turn_id, spec.class_name, 0.0,
                                            {{"error", e.what()}}));
      }
    }
  }
  return records;
}

}  // namespace

std::map<std::string, std::vector<ScoreRecord>> run_evaluation(const EvaluationPlan& plan) {
  if (plan.workers < 1) throw std::invalid_argument("run_evaluation requires workers >= 1");
  const MetricRegistry& registry = plan.registry ? *plan.registry : builtin_metrics();

  // Pre-pass: resolve every distinct metric spec once so registry and argument
  // problems abort before any scoring work happens.
  std::set<std::string> seen_specs;
  for (const Dialog& d : plan.dialogs) {
    for (const Turn& t : d.dialog_turns) {
      if (!t.eval_config.do_eval) continue;
      for (const MetricSpec& spec : t.eval_config.metrics) {
        if (seen_specs.insert(spec.class_name + "\x1f" + spec.args.dump()).second) {
          registry.resolve(spec, plan.judge);
        }
      }
    }
  }

  std::filesystem::path dir = plan.output_dir / "scores";
  std::filesystem::create_directories(dir);

  Logger log = plan.log;
  std::vector<std::optional<std::vector<ScoreRecord>>> results(plan.dialogs.size());

  parallel_for(plan.dialogs.size(), plan.workers, [&](std::size_t i) {
    const Dialog& d = plan.dialogs[i];
    auto gen_it = plan.generations.find(d.dialog_id);
    if (gen_it == plan.generations.end() || !gen_it->second.complete()) {
      log.info("evaluation", "skipped", {{"reason", "no complete generation record"}},
               d.dialog_id);
      return;
    }
    std::vector<ScoreRecord> records = evaluate_dialog(d, gen_it->second, registry, plan.judge);

    nlohmann::ordered_json file = nlohmann::ordered_json::array();
    for (const ScoreRecord& rec : records) file.push_back(rec.to_json());
    write_file_atomic(dir / (encode_dialog_filename(d.dialog_id) + ".json"),
                      file.dump(2) + "\n");
    log.info("evaluation", "scored", {{"records", records.size()}}, d.dialog_id);
    results[i] = std::move(records);
  });

  std::map<std::string, std::vector<ScoreRecord>> out;
  for (std::size_t i = 0; i < plan.dialogs.size(); ++i) {
    if (results[i]) out.emplace(plan.dialogs[i].dialog_id, std::move(*results[i]));
  }
  return out;
}

std::optional<std::vector<ScoreRecord>> read_score_records(
    const std::filesystem::path& output_dir, const std::string& dialog_id) {
  std::filesystem::path path =
      output_dir / "scores" / (encode_dialog_filename(dialog_id) + ".json");
  std::optional<std::string> content = read_file_if_exists(path);
  if (!content) return std::nullopt;
  try {
    nlohmann::json parsed = nlohmann::json::parse(*content);
    if (!parsed.is_array()) return std::nullopt;
    std::vector<ScoreRecord> records;
    for (const auto& rj : parsed) records.push_back(ScoreRecord::from_json(rj));
    return records;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> scan_resume_scores(const std::filesystem::path& output_dir,
                                            const std::vector<Dialog>& dialogs) {
  std::vector<std::string> pending;
  for (const Dialog& d : dialogs) {
    if (!read_score_records(output_dir, d.dialog_id)) pending.push_back(d.dialog_id);
  }
  return pending;
}

}  // namespace ude
