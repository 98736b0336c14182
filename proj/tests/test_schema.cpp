#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>

#include "ude/schema.hpp"

#include "test_helpers.hpp"

using namespace ude;

namespace {

Turn make_turn(const std::string& id, Role role, const std::string& content) {
  Turn t;
  t.turn_id = id;
  t.role = role;
  t.content = content;
  return t;
}

Dialog minimal_dialog() {
  Dialog d;
  d.dialog_id = "d1";
  Turn sys = make_turn("t000", Role::System, "be terse");
  Turn user = make_turn("t001", Role::User, "capital of France?");
  Turn asst = make_turn("t002", Role::Assistant, "Paris");
  asst.reference = "Paris";
  asst.eval_config.do_eval = true;
  asst.eval_config.metrics.push_back({"exact_match", nlohmann::json::object()});
  d.dialog_turns = {sys, user, asst};
  return d;
}

}  // namespace

TEST_CASE("minimal valid dialog has an empty report") {
  auto report = validate_dialog(minimal_dialog());
  CHECK(report.ok());
  CHECK(report.violations.empty());
}

TEST_CASE("consecutive same-role turns are flagged once") {
  Dialog d;
  d.dialog_id = "d1";
  d.dialog_turns = {make_turn("t000", Role::User, "a"), make_turn("t001", Role::User, "b"),
                    make_turn("t002", Role::Assistant, "c")};
  auto report = validate_dialog(d);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].path == "dialog_turns[1].role");
}

TEST_CASE("do_eval with empty metrics is flagged at eval_config.metrics") {
  Dialog d;
  d.dialog_id = "d1";
  Turn user = make_turn("t000", Role::User, "q");
  Turn asst = make_turn("t001", Role::Assistant, "a");
  asst.reference = "a";
  asst.eval_config.do_eval = true;  // metrics left empty
  d.dialog_turns = {user, asst};
  auto report = validate_dialog(d);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].path == "dialog_turns[1].eval_config.metrics");
}

TEST_CASE("more invariants") {
  Dialog d = minimal_dialog();

  SUBCASE("do_eval on a user turn is rejected") {
    d.dialog_turns[1].eval_config.do_eval = true;
    d.dialog_turns[1].eval_config.metrics.push_back({"exact_match", nlohmann::json::object()});
    auto report = validate_dialog(d);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].path == "dialog_turns[1].eval_config.do_eval");
  }
  SUBCASE("duplicate turn ids are rejected") {
    d.dialog_turns[2].turn_id = "t001";
    CHECK_FALSE(validate_dialog(d).ok());
  }
  SUBCASE("system turn after the start is rejected") {
    d.dialog_turns.push_back(make_turn("t003", Role::User, "x"));
    d.dialog_turns.push_back(make_turn("t004", Role::System, "late"));
    CHECK_FALSE(validate_dialog(d).ok());
  }
  SUBCASE("dialog with no assistant turn is rejected") {
    d.dialog_turns.resize(2);
    CHECK_FALSE(validate_dialog(d).ok());
  }
  SUBCASE("evaluated turn without reference needs a reference-free metric") {
    d.dialog_turns[2].reference.reset();
    CHECK_FALSE(validate_dialog(d).ok());
    d.dialog_turns[2].eval_config.metrics[0].args["reference_free"] = true;
    CHECK(validate_dialog(d).ok());
  }
  SUBCASE("empty dialog_turns is rejected") {
    d.dialog_turns.clear();
    auto report = validate_dialog(d);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].path == "dialog_turns");
  }
  SUBCASE("validate is deterministic") {
    d.dialog_turns[2].reference.reset();
    auto a = validate_dialog(d);
    auto b = validate_dialog(d);
    CHECK(a.violations == b.violations);
  }
}

TEST_CASE("serialization uses the canonical layout") {
  Dialog d = minimal_dialog();
  std::string text = serialize_dialog(d);

  CHECK(text.find("\"use_reference_history\"") != std::string::npos);
  CHECK(text.find("\"dialog_eval_config\"") != std::string::npos);
  // Fixed top-level key order.
  CHECK(text.rfind("{\"dialog_id\":", 0) == 0);
  CHECK(text.find("\"dialog_raw_info\"") < text.find("\"dialog_labels\""));
  CHECK(text.find("\"dialog_labels\"") < text.find("\"dialog_eval_config\""));
  CHECK(text.find("\"dialog_eval_config\"") < text.find("\"dialog_turns\""));
}

TEST_CASE("absent optional fields serialize as null") {
  Dialog d = minimal_dialog();
  d.dialog_turns[2].reference.reset();
  d.dialog_turns[2].eval_config.metrics[0].args["reference_free"] = true;
  std::string text = serialize_dialog(d);
  CHECK(text.find("\"reference\":null") != std::string::npos);
  CHECK(text.find("\"reference_document\":null") != std::string::npos);
}

TEST_CASE("serialize rejects non-finite label values") {
  Dialog d = minimal_dialog();
  d.dialog_labels["bad"] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(serialize_dialog(d), SerializationError);
}

TEST_CASE("parse errors carry the offending path") {
  CHECK_THROWS_AS(parse_dialog("not json"), ParseError);

  SUBCASE("missing dialog_turns") {
    try {
      parse_dialog(R"({"dialog_id": "d1"})");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.path() == "dialog_turns");
    }
  }
  SUBCASE("bad role value") {
    try {
      parse_dialog(
          R"({"dialog_id":"d1","dialog_turns":[{"turn_id":"t0","role":"robot","content":"x"}]})");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.path() == "dialog_turns[0].role");
    }
  }
  SUBCASE("wrong type for content") {
    try {
      parse_dialog(
          R"({"dialog_id":"d1","dialog_turns":[{"turn_id":"t0","role":"user","content":7}]})");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.path() == "dialog_turns[0].content");
    }
  }
}

TEST_CASE("unknown top-level keys are preserved under dialog_raw_info._extra") {
  Dialog d = parse_dialog(
      R"({"dialog_id":"d1","source_split":"dev",
          "dialog_turns":[{"role":"user","content":"q"},{"role":"assistant","content":"a"}]})");
  REQUIRE(d.dialog_raw_info.contains("_extra"));
  CHECK(d.dialog_raw_info["_extra"]["source_split"] == "dev");
  // Missing turn ids fall back to the ordinal convention.
  CHECK(d.dialog_turns[0].turn_id == "t000");
  CHECK(d.dialog_turns[1].turn_id == "t001");
}

TEST_CASE("turn-level unknown keys are preserved with a path prefix") {
  Dialog d = parse_dialog(
      R"({"dialog_id":"d1",
          "dialog_turns":[{"role":"user","content":"q","annotator":"a3"},
                          {"role":"assistant","content":"a"}]})");
  REQUIRE(d.dialog_raw_info.contains("_extra"));
  CHECK(d.dialog_raw_info["_extra"]["dialog_turns[0].annotator"] == "a3");
}

TEST_CASE("round trip: parse(serialize(d)) == d over random valid dialogs") {
  ude::testing::DialogGenerator gen(20260810);
  for (int i = 0; i < 300; ++i) {
    Dialog d = gen.next();
    REQUIRE(validate_dialog(d).ok());
    std::string text = serialize_dialog(d);
    Dialog back = parse_dialog(text);
    REQUIRE(back == d);
    // Canonical: a second serialize of the parsed dialog is byte-identical.
    REQUIRE(serialize_dialog(back) == text);
  }
}

TEST_CASE("auto_turn_id is zero padded") {
  CHECK(auto_turn_id(0) == "t000");
  CHECK(auto_turn_id(41) == "t041");
  CHECK(auto_turn_id(1234) == "t1234");
}
