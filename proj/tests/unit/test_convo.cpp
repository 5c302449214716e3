#include <doctest.h>

#include <random>

#include "protoflow/common/text_config.hpp"
#include "protoflow/convo/backend.hpp"
#include "protoflow/convo/emr.hpp"
#include "protoflow/convo/session.hpp"
#include "protoflow/convo/time_phrase.hpp"
#include "protoflow/convo/tools.hpp"
#include "protoflow/convo/validators.hpp"

using namespace protoflow;
using namespace protoflow::convo;

namespace {

const std::string kPack = std::string(PROTOFLOW_SOURCE_DIR) + "/packs/optimalct/";

Instant T(const char* s) { return parse_rfc3339(s); }

EmrStore acebutolol_emr() {
    EmrStore emr;
    emr.put({"P001", {{"Acebutolol", DoseSchedule::morning}}, {"penicillin"}});
    emr.put({"P002", {{"Metoprolol", DoseSchedule::evening}}, {}});
    return emr;
}

struct Fixture {
    TemplateSet templates = TemplateSet::load(kPack + "templates.toml");
    ToolSet tools = ToolSet::load(kPack + "tools.pft");
    EmrStore emr = acebutolol_emr();
    ValidatorRegistry validators = ValidatorRegistry::with_builtins();
    ScriptedBackend backend{&templates};
    TimeZone tz = TimeZone::load("America/New_York");

    ConversationSession open(const std::string& pid = "P001") {
        ConversationSession s;
        s.session_id = "s-" + pid;
        s.participant_id = pid;
        s.tools = tools.question("med_checkin")->tools;
        ask(s, templates, "med_checkin");
        return s;
    }

    AnswerContext ctx(Instant now, const std::string& pid = "P001") {
        AnswerContext c;
        c.backend = &backend;
        c.tools = &tools;
        c.validators = &validators;
        c.validation = {pid, &emr, now, &tz};
        return c;
    }
};

// 10:00 EDT
const auto kTen = T("2021-09-09T14:00:00Z");

} // namespace

TEST_CASE("ask renders the beta blocker question") {
    Fixture f;
    auto s = f.open();
    CHECK(s.pending_question == "When did you last take your beta blocker?");
    CHECK(s.attempt_count == 0);
    CHECK_THROWS_AS(ask(s, f.templates, "ack_start_missing"), RenderError);
    TemplateSet t;
    t.set("hello", "Hello {name}");
    CHECK_THROWS_AS(ask(s, t, "hello"), RenderError);
    CHECK(s.pending_question == "When did you last take your beta blocker?");

    SUBCASE("second ask replaces the question, counter unchanged") {
        handle_answer(s, "what?", f.ctx(kTen));
        REQUIRE(s.attempt_count == 1);
        ask(s, f.templates, "surgery_checkin");
        CHECK(s.question_id == "surgery_checkin");
        CHECK(s.pending_question == f.templates.text("surgery_checkin"));
        CHECK(s.attempt_count == 1);
    }
    SUBCASE("closed session refuses") {
        handle_answer(s, "I took it this morning with my coffee", f.ctx(kTen));
        CHECK_THROWS_AS(ask(s, f.templates, "med_checkin"), SessionClosed);
    }
}

TEST_CASE("coffee answer is adequate") {
    Fixture f;
    auto s = f.open();
    auto out = handle_answer(s, "I took it this morning with my coffee", f.ctx(kTen));
    CHECK(out.kind == AnswerOutcome::Kind::adequate);
    REQUIRE(out.values.size() == 1);
    CHECK(out.values[0].tool == "DidTakeMedication");
    CHECK(out.values[0].args.at("when") == "this morning");
    CHECK(s.status == SessionStatus::satisfied);
    CHECK(s.attempt_count == 0);
    REQUIRE(s.history.size() == 1);
    CHECK(s.history[0].outcome == "adequate");
    CHECK(out.notification.empty());
}

TEST_CASE("three inadequate answers escalate once") {
    Fixture f;
    auto s = f.open();
    const auto& variants = f.templates.restatements("med_checkin");
    auto a1 = handle_answer(s, "what?", f.ctx(kTen));
    CHECK(a1.kind == AnswerOutcome::Kind::restate);
    CHECK(a1.restatement == variants[0]);
    CHECK(s.attempt_count == 1);
    auto a2 = handle_answer(s, "what?", f.ctx(kTen));
    CHECK(a2.kind == AnswerOutcome::Kind::restate);
    CHECK(a2.restatement == variants[1]);
    CHECK(s.pending_question == variants[1]);
    auto a3 = handle_answer(s, "what?", f.ctx(kTen));
    CHECK(a3.kind == AnswerOutcome::Kind::escalate);
    CHECK_FALSE(a3.notification.empty());
    CHECK(s.status == SessionStatus::escalated);
    CHECK(s.attempt_count == 3);
    auto a4 = handle_answer(s, "this morning", f.ctx(kTen));
    CHECK(a4.kind == AnswerOutcome::Kind::ignored);
    CHECK(a4.notification.empty());
    CHECK(s.history.size() == 3);
}

TEST_CASE("empty answer restates") {
    Fixture f;
    auto s = f.open();
    auto out = handle_answer(s, "", f.ctx(kTen));
    CHECK(out.kind == AnswerOutcome::Kind::restate);
    CHECK(s.attempt_count == 1);
}

TEST_CASE("backend failure takes the restate path") {
    Fixture f;
    auto s = f.open();
    f.backend.fail_next(1);
    auto out = handle_answer(s, "I took it this morning", f.ctx(kTen));
    CHECK(out.kind == AnswerOutcome::Kind::restate);
    CHECK(out.backend_failed);
    CHECK(s.attempt_count == 1);
}

TEST_CASE("extraction") {
    Fixture f;
    const auto* med = f.tools.find("DidTakeMedication");
    REQUIRE(med);
    SUBCASE("time phrase") {
        auto r = f.backend.extract("I took it this morning", {med});
        REQUIRE(r.matches.size() == 1);
        CHECK(r.matches[0].args == std::map<std::string, std::string>{{"when", "this morning"}});
    }
    SUBCASE("optional keyword") {
        auto r = f.backend.extract("took my acebutolol at 7:30am", {med});
        REQUIRE(r.matches.size() == 1);
        CHECK(r.matches[0].args.at("medication") == "Acebutolol");
        CHECK(r.matches[0].args.at("when") == "7:30am");
    }
    SUBCASE("non-numeric answer to a numeric tool") {
        ToolFunction rating{"MealRating", {{"rating", ParamType::number, false}}, std::nullopt,
                            {{"rating", ExtractRule::Kind::number, "", ""}}};
        CHECK(f.backend.extract("blue", {&rating}).unmatched());
        CHECK(f.backend.extract("4", {&rating}).matches.size() == 1);
    }
    SUBCASE("two bound tools both match") {
        ToolFunction side{"SideEffects", {{"dizzy", ParamType::boolean, false}}, std::nullopt,
                          {{"dizzy", ExtractRule::Kind::keyword, "dizzy", "true"}}};
        f.tools.add(side);
        auto r = f.backend.extract("this morning, and I felt dizzy", {med, f.tools.find("SideEffects")});
        REQUIRE(r.matches.size() == 2);
        CHECK(r.matches[0].tool == "DidTakeMedication");
        CHECK(r.matches[1].tool == "SideEffects");

        ConversationSession s;
        s.session_id = "s";
        s.participant_id = "P001";
        s.tools = {"DidTakeMedication", "SideEffects"};
        s.pending_question = "?";
        auto out = handle_answer(s, "this morning, and I felt dizzy", f.ctx(kTen));
        CHECK(out.kind == AnswerOutcome::Kind::adequate);
        CHECK(out.values.size() == 2);
    }
    SUBCASE("deterministic") {
        for (const auto* text : {"I took it this morning", "yesterday evening", "dunno", ""}) {
            CHECK(to_json(f.backend.extract(text, {med})) == to_json(f.backend.extract(text, {med})));
        }
    }
}

TEST_CASE("did_take_medication validator") {
    Fixture f;
    auto v = [&](const std::string& pid, std::map<std::string, std::string> args, Instant now) {
        return validate_did_take_medication({"DidTakeMedication", std::move(args)}, {pid, &f.emr, now, &f.tz});
    };
    CHECK(v("P001", {{"when", "this morning"}}, kTen).ok);
    CHECK_FALSE(v("P001", {{"when", "last week"}}, kTen).ok);
    CHECK_FALSE(v("P001", {{"when", "yesterday morning"}}, kTen).ok);
    CHECK_FALSE(v("P001", {{"when", "this evening"}}, T("2021-09-09T23:00:00Z")).ok);
    // Stated interval starts after now.
    CHECK_FALSE(v("P001", {{"when", "this morning"}}, T("2021-09-09T09:30:00Z")).ok);
    CHECK(v("P001", {{"when", "7:30am"}, {"medication", "acebutolol"}}, kTen).ok);

    auto missing = v("P001", {{"when", "this morning"}, {"medication", "Warfarin"}}, kTen);
    CHECK_FALSE(missing.ok);
    CHECK(missing.note.find("Warfarin") != std::string::npos);
    auto no_record = v("P999", {{"when", "this morning"}}, kTen);
    CHECK_FALSE(no_record.ok);
    CHECK_FALSE(no_record.note.empty());

    // Evening dose.
    CHECK(v("P002", {{"when", "this evening"}}, T("2021-09-10T01:00:00Z")).ok);
    CHECK_FALSE(v("P002", {{"when", "this morning"}}, kTen).ok);
}

TEST_CASE("rating_scale validator") {
    auto v = [](const std::string& r) { return validate_rating_scale({"MealRating", {{"rating", r}}}, {}).ok; };
    CHECK(v("1"));
    CHECK(v("5"));
    CHECK_FALSE(v("0"));
    CHECK_FALSE(v("6"));
    CHECK_FALSE(v("3.5"));
    CHECK_FALSE(v("x"));
}

TEST_CASE("time phrases") {
    TimeZone tz = TimeZone::load("America/New_York");
    auto phrase = find_time_phrase("I took it this morning with my coffee");
    REQUIRE(phrase);
    CHECK(*phrase == "this morning");
    CHECK(find_time_phrase("5 hours ago please") == std::optional<std::string>("5 hours ago"));
    CHECK(find_time_phrase("around 7:15 pm") == std::optional<std::string>("7:15 pm"));
    CHECK_FALSE(find_time_phrase("blue"));
    CHECK_FALSE(find_time_phrase("mornings"));

    auto morning = resolve_time_phrase("this morning", kTen, tz);
    REQUIRE(morning);
    CHECK(morning->start == T("2021-09-09T10:00:00Z"));
    CHECK(morning->end == T("2021-09-09T16:00:00Z"));
    auto evening = resolve_time_phrase("evening", kTen, tz);
    REQUIRE(evening);
    CHECK(evening->start == T("2021-09-09T21:00:00Z"));
    CHECK(evening->end == T("2021-09-10T02:00:00Z"));
    auto week = resolve_time_phrase("last week", kTen, tz);
    REQUIRE(week);
    CHECK(week->end == T("2021-09-09T04:00:00Z"));
    CHECK_FALSE(resolve_time_phrase("next tuesday", kTen, tz));
}

TEST_CASE("escalation exactness over random answer sequences") {
    Fixture f;
    std::mt19937_64 rng(7);
    const std::vector<std::string> answers = {"what?", "", "this morning", "last week", "blue", "I took it yesterday",
                                              "7am", "dunno"};
    for (int round = 0; round < 500; ++round) {
        auto s = f.open();
        int notifications = 0, inadequate = 0, adequate = 0;
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            auto out = handle_answer(s, answers[rng() % answers.size()], f.ctx(kTen));
            notifications += !out.notification.empty();
            if (out.kind == AnswerOutcome::Kind::restate || out.kind == AnswerOutcome::Kind::escalate) ++inadequate;
            if (out.kind == AnswerOutcome::Kind::adequate) {
                ++adequate;
                // Nothing enters the context without a passing validator.
                for (const auto& v : out.values) {
                    CHECK(validate_did_take_medication({v.tool, v.args}, f.ctx(kTen).validation).ok);
                }
            }
        }
        CHECK(notifications <= 1);
        CHECK(adequate <= 1);
        CHECK(s.attempt_count <= kMaxAttempts);
        CHECK((notifications == 1) == (inadequate == 3 && adequate == 0));
        CHECK((s.status == SessionStatus::escalated) == (notifications == 1));
    }
}

TEST_CASE("session JSON round-trip") {
    Fixture f;
    auto s = f.open();
    handle_answer(s, "what?", f.ctx(kTen));
    auto back = session_from_json(to_json(s));
    CHECK(back == s);
    CHECK(to_json(back).dump() == to_json(s).dump());
}

TEST_CASE("replayed extraction skips the backend") {
    Fixture f;
    auto s = f.open();
    ExtractionResult recorded{{{"DidTakeMedication", {{"when", "this morning"}}, true}}};
    auto c = f.ctx(kTen);
    c.recorded_extraction = &recorded;
    f.backend.fail_next(5);
    auto out = handle_answer(s, "anything", c);
    CHECK(out.kind == AnswerOutcome::Kind::adequate);
}

TEST_CASE("tool declarations") {
    auto ts = ToolSet::parse(R"(
        tool A { param x: number; param y: text optional; extract x number; }
        question q -> A;
    )");
    REQUIRE(ts.find("A"));
    CHECK(ts.find("A")->params.size() == 2);
    CHECK(ts.question("q")->tools == std::vector<std::string>{"A"});
    CHECK_THROWS_AS(ToolSet::parse("tool A { param x: number; param x: text; }"), ToolsError);
    CHECK_THROWS_AS(ToolSet::parse("tool A { param x: color; }"), ToolsError);
    CHECK_THROWS_AS(ToolSet::parse("question q -> Missing;"), ToolsError);
    try {
        ToolSet::parse("tool A {\n  param x number;\n}");
        FAIL("expected error");
    } catch (const ToolsError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("EMR store") {
    auto cfg = parse_text_config(R"(
[participants.P001]
medications = ["Acebutolol:morning"]
allergies = ["penicillin"]
)");
    auto emr = EmrStore::from_config(cfg);
    REQUIRE(emr.find("P001"));
    CHECK(emr.find("P001")->find("ACEBUTOLOL")->schedule == DoseSchedule::morning);
    EmrStore dup;
    CHECK_THROWS(dup.put({"P", {{"A", DoseSchedule::morning}, {"a", DoseSchedule::evening}}, {}}));
}
