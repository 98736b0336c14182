#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ude/metrics.hpp"

#include "test_helpers.hpp"

using namespace ude;
using ude::testing::make_temp_dir;

namespace {

// Test connector with a fixed reply sequence (last one repeats) and prompt capture.
class SequenceConnector : public Connector {
 public:
  explicit SequenceConnector(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string name() const override { return "sequence"; }

  std::vector<std::string> prompts() const {
    std::lock_guard<std::mutex> lock(mu_);
    return prompts_;
  }

 protected:
  GenerationOutcome do_generate(const ConnectorSession&, const std::vector<Message>& context,
                                const GenerationParams&) override {
    std::lock_guard<std::mutex> lock(mu_);
    prompts_.push_back(context.back().content);
    std::size_t i = std::min(cursor_++, replies_.size() - 1);
    return {replies_[i], 1};
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> replies_;
  std::size_t cursor_ = 0;
  std::vector<std::string> prompts_;
};

JudgeRuntime judge_with(std::shared_ptr<Connector> connector) {
  JudgeRuntime rt;
  rt.judge = std::move(connector);
  return rt;
}

TurnContext ctx_of(const std::string& prediction,
                   std::optional<std::string> reference = std::nullopt) {
  TurnContext ctx;
  ctx.dialog_id = "d1";
  ctx.turn_id = "t1";
  ctx.prediction = prediction;
  ctx.history = {{Role::User, "the question"}};
  ctx.reference = std::move(reference);
  return ctx;
}

std::optional<ScoreRecord> run_metric(const std::string& name, const nlohmann::json& args,
                                      const TurnContext& ctx, const JudgeRuntime& rt = {}) {
  return builtin_metrics().resolve({name, args}, rt)->score(ctx);
}

}  // namespace

TEST_CASE("registry resolves, rejects unknowns and validates args") {
  JudgeRuntime rt;
  auto metric = builtin_metrics().resolve({"exact_match", nlohmann::json::object()}, rt);
  CHECK(metric->name() == "exact_match");

  CHECK_THROWS_AS(builtin_metrics().resolve({"nope", {}}, rt), UnknownMetricError);

  try {
    builtin_metrics().resolve({"llm_judge", {{"scale_max", "ten"}}},
                              judge_with(std::make_shared<ScriptedConnector>()));
    FAIL("expected BadMetricArgsError");
  } catch (const BadMetricArgsError& e) {
    CHECK(e.arg() == "scale_max");
  }

  CHECK_THROWS_AS(run_metric("exact_match", {{"bogus_arg", 1}}, ctx_of("x", "x")),
                  BadMetricArgsError);

  MetricRegistry extra;
  extra.register_metric("custom", [](const nlohmann::json&, const JudgeRuntime&) {
    return std::unique_ptr<Metric>{};
  });
  CHECK_THROWS_AS(extra.register_metric("custom", nullptr), DuplicateMetricError);
}

TEST_CASE("exact_match") {
  SUBCASE("normalization: case fold and terminal punctuation") {
    auto rec = run_metric("exact_match", {{"mode", "strict"}}, ctx_of("Paris.", "paris"));
    CHECK(rec->score == 1.0);
  }
  SUBCASE("contains vs strict") {
    auto contains =
        run_metric("exact_match", {{"mode", "contains"}}, ctx_of("The answer is Paris", "Paris"));
    CHECK(contains->score == 1.0);
    auto strict =
        run_metric("exact_match", {{"mode", "strict"}}, ctx_of("The answer is Paris", "Paris"));
    CHECK(strict->score == 0.0);
  }
  SUBCASE("clear miss scores 0 in either mode") {
    CHECK(run_metric("exact_match", {{"mode", "strict"}}, ctx_of("London", "Paris"))->score == 0.0);
    CHECK(run_metric("exact_match", {{"mode", "contains"}}, ctx_of("London", "Paris"))->score ==
          0.0);
  }
  SUBCASE("whitespace collapse") {
    auto rec = run_metric("exact_match", {}, ctx_of("  New   York\n", "new york"));
    CHECK(rec->score == 1.0);
  }
  SUBCASE("normalization toggles") {
    auto rec = run_metric("exact_match", {{"case_fold", false}}, ctx_of("Paris", "paris"));
    CHECK(rec->score == 0.0);
  }
  SUBCASE("missing reference") {
    CHECK_THROWS_AS(run_metric("exact_match", {}, ctx_of("x")), MissingReferenceError);
  }
  SUBCASE("purity: repeated calls are identical") {
    auto a = run_metric("exact_match", {}, ctx_of("Paris.", "paris"));
    auto b = run_metric("exact_match", {}, ctx_of("Paris.", "paris"));
    CHECK(a->score == b->score);
    CHECK(a->detail == b->detail);
  }
}

TEST_CASE("llm_judge rating parse and scale mapping") {
  SUBCASE("top rating maps to 1.0") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"Good. Rating: [[10]]"});
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->score == 1.0);
    CHECK(rec->detail["rating"] == 10);
  }
  SUBCASE("bottom rating maps to 0.0") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[1]]"});
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->score == 0.0);
  }
  SUBCASE("the last [[integer]] wins") {
    auto judge = std::make_shared<SequenceConnector>(
        std::vector<std::string>{"I think [[3]] maybe [[7]]... Rating: [[7]]"});
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->detail["rating"] == 7);
    CHECK(rec->score == doctest::Approx((7.0 - 1.0) / 9.0));
  }
  SUBCASE("mapping is monotone with exact endpoints") {
    double prev = -1.0;
    for (int x = 1; x <= 10; ++x) {
      auto judge = std::make_shared<SequenceConnector>(
          std::vector<std::string>{"Rating: [[" + std::to_string(x) + "]]"});
      auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
      CHECK(rec->score > prev);
      prev = rec->score;
    }
    CHECK(prev == 1.0);
  }
  SUBCASE("custom scale_max") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[3]]"});
    auto rec = run_metric("llm_judge", {{"scale_max", 5}}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->score == doctest::Approx(0.5));
  }
}

TEST_CASE("llm_judge re-asks on parse failure, then applies the policy") {
  SUBCASE("recovers when a re-ask parses") {
    auto judge = std::make_shared<SequenceConnector>(
        std::vector<std::string>{"no rating here", "Rating: [[6]]"});
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->detail["rating"] == 6);
    CHECK(judge->prompts().size() == 2);
  }
  SUBCASE("zero policy records score 0 with parse_failed") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"never a rating"});
    JudgeRuntime rt = judge_with(judge);
    rt.parse_retries = 2;
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), rt);
    CHECK(rec->score == 0.0);
    CHECK(rec->detail["parse_failed"] == true);
    CHECK(judge->prompts().size() == 3);  // first ask + 2 re-asks
  }
  SUBCASE("skip policy yields no record") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"nope"});
    JudgeRuntime rt = judge_with(judge);
    rt.on_parse_failure = "skip";
    CHECK_FALSE(run_metric("llm_judge", {}, ctx_of("resp"), rt).has_value());
  }
  SUBCASE("error policy throws JudgeParseError") {
    auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"nope"});
    JudgeRuntime rt = judge_with(judge);
    rt.on_parse_failure = "error";
    CHECK_THROWS_AS(run_metric("llm_judge", {}, ctx_of("resp"), rt), JudgeParseError);
  }
  SUBCASE("out-of-scale ratings do not parse") {
    auto judge = std::make_shared<SequenceConnector>(
        std::vector<std::string>{"Rating: [[11]]", "Rating: [[0]]", "Rating: [[9]]"});
    auto rec = run_metric("llm_judge", {}, ctx_of("resp"), judge_with(judge));
    CHECK(rec->detail["rating"] == 9);
  }
}

TEST_CASE("llm_judge fills the prompt template") {
  auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[5]]"});
  TurnContext ctx;
  ctx.dialog_id = "d1";
  ctx.turn_id = "t3";
  ctx.prediction = "THE-RESPONSE";
  ctx.history = {{Role::User, "EARLIER-Q"}, {Role::Assistant, "EARLIER-A"}, {Role::User, "THE-QUESTION"}};
  ctx.reference = "THE-REFERENCE";

  SUBCASE("default template carries history, question, reference and response") {
    run_metric("llm_judge", {}, ctx, judge_with(judge));
    auto prompts = judge->prompts();
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0].find("user: EARLIER-Q") != std::string::npos);
    CHECK(prompts[0].find("assistant: EARLIER-A") != std::string::npos);
    CHECK(prompts[0].find("THE-QUESTION") != std::string::npos);
    CHECK(prompts[0].find("THE-REFERENCE") != std::string::npos);
    CHECK(prompts[0].find("THE-RESPONSE") != std::string::npos);
    // The question line is not duplicated into the rendered history.
    CHECK(prompts[0].find("user: THE-QUESTION") == std::string::npos);
  }
  SUBCASE("per-spec template override") {
    run_metric("llm_judge", {{"template", "Q={question} R={response} end with [[x]]"}}, ctx,
               judge_with(judge));
    auto prompts = judge->prompts();
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0] == "Q=THE-QUESTION R=THE-RESPONSE end with [[x]]");
  }
}

TEST_CASE("llm_judge wraps connector failures and balances judge sessions") {
  ScriptedOptions fail;
  fail.fail_dialogs = {};  // fail on every dialog via unknown mode instead
  auto judge = std::make_shared<ScriptedConnector>(ScriptedOptions{.mode = "bogus"});
  JudgeRuntime rt = judge_with(judge);
  CHECK_THROWS_AS(run_metric("llm_judge", {}, ctx_of("resp"), rt), JudgeTransportError);
  CHECK(judge->begin_calls() == judge->end_calls());
}

TEST_CASE("llm_judge without a configured judge connector is a config error") {
  CHECK_THROWS_AS(run_metric("llm_judge", {}, ctx_of("resp"), {}), ConfigError);
}

TEST_CASE("instruction_adherence") {
  auto inst = [](const std::string& type, nlohmann::json args = nlohmann::json::object()) {
    return nlohmann::json{{"type", type}, {"args", std::move(args)}};
  };
  auto with_instructions = [](TurnContext ctx, nlohmann::json instructions) {
    ctx.turn_labels["instructions"] = std::move(instructions);
    return ctx;
  };

  SUBCASE("max_words within budget") {
    auto ctx = with_instructions(ctx_of("one two three"),
                                 nlohmann::json::array({inst("max_words", {{"n", 5}})}));
    CHECK(run_metric("instruction_adherence", {}, ctx)->score == 1.0);
  }
  SUBCASE("half of two checks pass") {
    auto ctx = with_instructions(
        ctx_of("BEGIN middle"),
        nlohmann::json::array(
            {inst("contains", {{"text", "BEGIN"}}), inst("ends_with", {{"text", "END"}})}));
    auto rec = run_metric("instruction_adherence", {}, ctx);
    CHECK(rec->score == doctest::Approx(0.5));
    CHECK(rec->detail["results"][0]["ok"] == true);
    CHECK(rec->detail["results"][1]["ok"] == false);
  }
  SUBCASE("json_format accepts valid JSON and rejects the rest") {
    auto good = with_instructions(ctx_of(R"({"a": 1})"), nlohmann::json::array({inst("json_format")}));
    CHECK(run_metric("instruction_adherence", {}, good)->score == 1.0);
    auto bad = with_instructions(ctx_of(R"({a: 1})"), nlohmann::json::array({inst("json_format")}));
    CHECK(run_metric("instruction_adherence", {}, bad)->score == 0.0);
  }
  SUBCASE("remaining instruction types") {
    auto ctx = with_instructions(
        ctx_of("- a\n- b\ntail"),
        nlohmann::json::array({inst("bullet_count", {{"n", 2}}), inst("min_words", {{"n", 2}}),
                               inst("not_contains", {{"text", "zzz"}}),
                               inst("starts_with", {{"text", "- a"}})}));
    CHECK(run_metric("instruction_adherence", {}, ctx)->score == 1.0);
  }
  SUBCASE("empty instruction list") {
    CHECK_THROWS_AS(run_metric("instruction_adherence", {},
                               with_instructions(ctx_of("x"), nlohmann::json::array())),
                    NoInstructionsError);
    CHECK_THROWS_AS(run_metric("instruction_adherence", {}, ctx_of("x")), NoInstructionsError);
  }
  SUBCASE("unknown instruction type") {
    CHECK_THROWS_AS(run_metric("instruction_adherence", {},
                               with_instructions(ctx_of("x"),
                                                 nlohmann::json::array({inst("sing_nicely")}))),
                    UnknownInstructionTypeError);
  }
}

TEST_CASE("math_answer") {
  SUBCASE("boxed extraction") {
    CHECK(run_metric("math_answer", {}, ctx_of("... so \\boxed{42}", "42"))->score == 1.0);
  }
  SUBCASE("comma normalization") {
    CHECK(run_metric("math_answer", {}, ctx_of("the total is 1,000", "1000"))->score == 1.0);
  }
  SUBCASE("relative tolerance 1e-4") {
    CHECK(run_metric("math_answer", {}, ctx_of("approximately 3.14159", "3.1416"))->score == 1.0);
    CHECK(run_metric("math_answer", {}, ctx_of("approximately 3.15", "3.1416"))->score == 0.0);
  }
  SUBCASE("last numeric literal wins without a box") {
    CHECK(run_metric("math_answer", {}, ctx_of("first 7 then 9", "9"))->score == 1.0);
  }
  SUBCASE("nested braces in the boxed group") {
    auto rec = run_metric("math_answer", {}, ctx_of("\\boxed{x = \\frac{1}{2} = 0.5}", "0.5"));
    CHECK(rec->score == 1.0);
  }
  SUBCASE("zero reference uses the absolute tolerance") {
    CHECK(run_metric("math_answer", {}, ctx_of("answer: 0", "0"))->score == 1.0);
    CHECK(run_metric("math_answer", {}, ctx_of("answer: 0.001", "0"))->score == 0.0);
  }
  SUBCASE("dollar and percent decorations are stripped") {
    CHECK(run_metric("math_answer", {}, ctx_of("cost: $1,234.50", "1234.5"))->score == 1.0);
  }
  SUBCASE("no extractable answer scores 0 softly") {
    auto rec = run_metric("math_answer", {}, ctx_of("no numbers at all", "7"));
    CHECK(rec->score == 0.0);
    CHECK(rec->detail["extraction_failed"] == true);
  }
  SUBCASE("missing or non-numeric reference") {
    CHECK_THROWS_AS(run_metric("math_answer", {}, ctx_of("42")), MissingReferenceError);
    CHECK_THROWS_AS(run_metric("math_answer", {}, ctx_of("42", "not a number")),
                    MissingReferenceError);
  }
}

TEST_CASE("code_rule") {
  auto with_rules = [](TurnContext ctx, nlohmann::json rules) {
    ctx.turn_labels["code_rules"] = std::move(rules);
    return ctx;
  };
  auto rule = [](const std::string& pattern, const std::string& polarity) {
    return nlohmann::json{{"pattern", pattern}, {"polarity", polarity}};
  };

  SUBCASE("pattern over a fenced block") {
    auto ctx = with_rules(ctx_of("```\ndef add(a,b): return a+b\n```"),
                          nlohmann::json::array({rule("def [a-z_]+\\(", "must_match")}));
    CHECK(run_metric("code_rule", {}, ctx)->score == 1.0);
  }
  SUBCASE("positive and negative polarities") {
    auto ctx = with_rules(ctx_of("```python\nsnake_case = 1\n```"),
                          nlohmann::json::array({rule("camelCase", "must_not_match"),
                                                 rule("snake_case", "must_match")}));
    CHECK(run_metric("code_rule", {}, ctx)->score == 1.0);
  }
  SUBCASE("no fence: rules apply to the whole prediction") {
    auto ctx = with_rules(ctx_of("plain text with token_xyz"),
                          nlohmann::json::array({rule("token_xyz", "must_match")}));
    CHECK(run_metric("code_rule", {}, ctx)->score == 1.0);
  }
  SUBCASE("text outside fences is invisible to the rules") {
    auto ctx = with_rules(ctx_of("outside_marker\n```\ninside\n```"),
                          nlohmann::json::array({rule("outside_marker", "must_not_match")}));
    CHECK(run_metric("code_rule", {}, ctx)->score == 1.0);
  }
  SUBCASE("fraction of satisfied rules") {
    auto ctx = with_rules(ctx_of("```\nalpha\n```"),
                          nlohmann::json::array({rule("alpha", "must_match"),
                                                 rule("beta", "must_match")}));
    CHECK(run_metric("code_rule", {}, ctx)->score == doctest::Approx(0.5));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(run_metric("code_rule", {}, ctx_of("x")), NoRulesError);
    CHECK_THROWS_AS(
        run_metric("code_rule", {},
                   with_rules(ctx_of("x"), nlohmann::json::array({rule("([", "must_match")}))),
        BadPatternError);
    CHECK_THROWS_AS(
        run_metric("code_rule", {},
                   with_rules(ctx_of("x"), nlohmann::json::array({rule("x", "sideways")}))),
        BadPatternError);
  }
}

TEST_CASE("score records are range checked") {
  CHECK_THROWS_AS(make_score_record("d", "t", "m", 1.5), std::logic_error);
  CHECK_THROWS_AS(make_score_record("d", "t", "m", -0.1), std::logic_error);
  CHECK_THROWS_AS(
      ScoreRecord::from_json(
          {{"dialog_id", "d"}, {"turn_id", "t"}, {"metric_name", "m"}, {"score", 2.0}}),
      SchemaError);
}

namespace {

// One dialog, two evaluated assistant turns with two metrics each.
Dialog eval_dialog(const std::string& id) {
  Dialog d;
  d.dialog_id = id;
  auto add_turn = [&d](Role role, const std::string& content) -> Turn& {
    Turn t;
    t.turn_id = auto_turn_id(d.dialog_turns.size());
    t.role = role;
    t.content = content;
    d.dialog_turns.push_back(std::move(t));
    return d.dialog_turns.back();
  };
  add_turn(Role::User, "capital of France?");
  Turn& a1 = add_turn(Role::Assistant, "Paris");
  a1.reference = "Paris";
  a1.eval_config.do_eval = true;
  a1.eval_config.metrics = {{"exact_match", {{"mode", "strict"}}},
                            {"exact_match", {{"mode", "contains"}}}};
  add_turn(Role::User, "and of Germany?");
  Turn& a2 = add_turn(Role::Assistant, "Berlin");
  a2.reference = "Berlin";
  a2.eval_config.do_eval = true;
  a2.eval_config.metrics = {{"exact_match", {{"mode", "strict"}}},
                            {"llm_judge", {{"reference_free", true}}}};
  return d;
}

GenerationRecord record_for(const Dialog& d, const std::string& text_prefix) {
  GenerationRecord rec;
  rec.dialog_id = d.dialog_id;
  rec.status = "complete";
  for (const Turn& t : d.dialog_turns) {
    if (t.role == Role::Assistant) {
      rec.turns.push_back({t.turn_id, text_prefix + t.content, 1.0, 1});
    }
  }
  return rec;
}

}  // namespace

TEST_CASE("run_evaluation produces one record per metric spec and checkpoints") {
  auto dir = make_temp_dir("eval_basic");
  Dialog d = eval_dialog("d1");

  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "")}};
  plan.judge = judge_with(
      std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[10]]"}));
  plan.output_dir = dir;

  auto results = run_evaluation(plan);
  REQUIRE(results.count("d1") == 1);
  CHECK(results["d1"].size() == 4);  // 2 turns x 2 metrics

  auto persisted = read_score_records(dir, "d1");
  REQUIRE(persisted.has_value());
  CHECK(persisted->size() == 4);
  for (const auto& rec : *persisted) {
    CHECK(rec.score >= 0.0);
    CHECK(rec.score <= 1.0);
  }
}

TEST_CASE("turns with do_eval=false produce no records") {
  auto dir = make_temp_dir("eval_noeval");
  Dialog d = eval_dialog("d1");
  for (Turn& t : d.dialog_turns) {
    t.eval_config.do_eval = false;
    t.eval_config.metrics.clear();
  }
  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "")}};
  plan.output_dir = dir;
  auto results = run_evaluation(plan);
  CHECK(results["d1"].empty());
  CHECK(read_score_records(dir, "d1")->empty());
}

TEST_CASE("dialogs without a complete generation record are skipped") {
  auto dir = make_temp_dir("eval_skip");
  Dialog d = eval_dialog("d1");
  GenerationRecord failed;
  failed.dialog_id = "d1";
  failed.status = "failed";

  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", failed}};
  plan.judge = judge_with(
      std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[10]]"}));
  plan.output_dir = dir;
  auto results = run_evaluation(plan);
  CHECK(results.empty());
  CHECK_FALSE(read_score_records(dir, "d1").has_value());
  // Still pending for a future resume once generation completes.
  CHECK(scan_resume_scores(dir, {d}) == std::vector<std::string>{"d1"});
}

TEST_CASE("unknown metric in the data aborts before any scoring") {
  auto dir = make_temp_dir("eval_abort");
  Dialog d = eval_dialog("d1");
  d.dialog_turns[1].eval_config.metrics[0].class_name = "not_a_metric";
  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "")}};
  plan.judge = judge_with(
      std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[10]]"}));
  plan.output_dir = dir;
  CHECK_THROWS_AS(run_evaluation(plan), UnknownMetricError);
  CHECK_FALSE(read_score_records(dir, "d1").has_value());
}

TEST_CASE("per-turn metric errors become score-0 records with detail.error") {
  auto dir = make_temp_dir("eval_soft");
  Dialog d = eval_dialog("d1");
  d.dialog_turns[1].reference.reset();  // exact_match will throw MissingReferenceError
  d.dialog_turns[1].eval_config.metrics = {{"exact_match", {{"reference_free", true}}}};

  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "")}};
  plan.judge = judge_with(
      std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[10]]"}));
  plan.output_dir = dir;
  auto results = run_evaluation(plan);
  REQUIRE(results["d1"].size() == 3);
  const ScoreRecord& soft = results["d1"][0];
  CHECK(soft.score == 0.0);
  CHECK(soft.detail.contains("error"));
}

TEST_CASE("resume: cached scores mean zero judge calls") {
  auto dir = make_temp_dir("eval_resume");
  Dialog d = eval_dialog("d1");

  auto judge1 = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[9]]"});
  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "")}};
  plan.judge = judge_with(judge1);
  plan.output_dir = dir;
  run_evaluation(plan);
  CHECK(judge1->generate_calls() == 1);

  // Second pass over the same output dir: nothing pending, no judge traffic.
  auto pending = scan_resume_scores(dir, {d});
  CHECK(pending.empty());
  auto judge2 = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[9]]"});
  plan.dialogs = {};
  plan.judge = judge_with(judge2);
  run_evaluation(plan);
  CHECK(judge2->generate_calls() == 0);
}

TEST_CASE("evaluation history honors the reference-history setting") {
  auto dir = make_temp_dir("eval_hist");
  Dialog d = eval_dialog("d1");
  d.dialog_eval_config.use_reference_history = false;  // judge sees predictions

  auto judge = std::make_shared<SequenceConnector>(std::vector<std::string>{"Rating: [[10]]"});
  EvaluationPlan plan;
  plan.dialogs = {d};
  plan.generations = {{"d1", record_for(d, "PRED:")}};
  plan.judge = judge_with(judge);
  plan.output_dir = dir;
  run_evaluation(plan);

  auto prompts = judge->prompts();
  REQUIRE(prompts.size() == 1);  // only the second turn carries the judge metric
  CHECK(prompts[0].find("PRED:Paris") != std::string::npos);
}
