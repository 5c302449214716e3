#include <doctest.h>

#include <random>

#include "support/world.hpp"

using namespace protoflow;
using namespace protoflow::runtime;
using namespace pftest;
using namespace std::chrono_literals;

namespace {

std::vector<AuditRecord> of_kind(const std::vector<AuditRecord>& rs, AuditKind k) {
    std::vector<AuditRecord> out;
    for (const auto& r : rs) {
        if (r.kind == k) out.push_back(r);
    }
    return out;
}

nlohmann::json comparable(nlohmann::json state) {
    state.erase("catch_up_pending");
    return state;
}

} // namespace

TEST_CASE("registration") {
    World w;
    const auto sid = w.study("tre");
    const auto& m = w.engine.register_participant(sid, "P1", "+15551230001");
    CHECK(m.current_state == "WaitingStart");
    CHECK(m.timezone == "America/New_York");
    CHECK(m.status == MachineStatus::active);
    auto trail = w.engine.audit_trail("P1");
    REQUIRE(trail.size() == 1);
    CHECK(trail[0].kind == AuditKind::registration);
    CHECK(trail[0].detail["state"] == "WaitingStart");

    CHECK_THROWS_AS(w.engine.register_participant(sid, "P1", "+15551230002"), DuplicateParticipant);
    CHECK_THROWS_AS(w.engine.register_participant(sid, "P2", "+15551230001"), DuplicateParticipant);
    CHECK_THROWS_AS(w.engine.register_participant("study-99", "P3", "+15551230003"), UnknownStudy);
    CHECK_THROWS_AS(w.engine.register_participant(sid, "P4", "not a number"), std::invalid_argument);
    CHECK_THROWS(w.engine.register_participant(sid, "P5", "+15551230005", "Mars/Olympus"));
    CHECK(w.engine.participants(sid).size() == 1);
    CHECK(w.engine.audit_log().size() == 2);  // study creation and P1
}

TEST_CASE("a full TRE day") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");

    w.until("2021-09-09T11:05:00Z");
    auto r = w.text("+15551230001", "STARTCAL 7am");
    CHECK(r.handled_by == "transition");
    CHECK(w.engine.participant("P1").current_state == "Eating");
    CHECK(w.last_to("+15551230001") == "Got it, your eating window started at 7:00 AM. Text ENDCAL when you finish eating.");

    w.until("2021-09-09T21:10:00Z");
    r = w.text("+15551230001", "endcal 5pm");
    CHECK(r.handled_by == "transition");
    const auto& m = w.engine.participant("P1");
    CHECK(m.current_state == "WaitingStart");
    CHECK(w.last_to("+15551230001") == "Great job! Your eating window was 10h, right inside the 9-11 hour target.");
    auto fasts = study::fasts_of(m);
    REQUIRE(fasts.size() == 1);
    CHECK(fasts[0].success);
    CHECK(fasts[0].duration_hours == doctest::Approx(10.0));

    // The 20:00 reminder is guarded off because STARTCAL came today.
    w.until("2021-09-10T00:30:00Z");
    CHECK(w.sms.sent_to("+15551230001").size() == 2);
    // The next evening it fires.
    w.until("2021-09-11T00:30:00Z");
    CHECK(w.last_to("+15551230001").rfind("We have not received your STARTCAL today", 0) == 0);
}

TEST_CASE("ENDCAL while waiting for STARTCAL is rejected without a state change") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.until("2021-09-09T22:00:00Z");
    const auto before = w.engine.participant("P1");
    auto r = w.text("+15551230001", "ENDCAL 6pm");
    REQUIRE(r.transition);
    CHECK(r.transition->result == TransitionOutcome::Result::no_match);
    CHECK(w.engine.participant("P1").current_state == "WaitingStart");
    CHECK(w.engine.participant("P1").context == before.context);
    auto rej = of_kind(w.engine.audit_trail("P1"), AuditKind::rejection);
    REQUIRE(rej.size() == 1);
    CHECK(rej[0].detail["reason"] == "no_match");
    CHECK(rej[0].detail["trigger"] == "message \"endcal\"");
    CHECK(w.engine.participant("P1").unrecognized == 0);
}

TEST_CASE("unrecognized messages get the canonical reply") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.until("2021-09-09T12:00:00Z");
    auto r = w.text("+15551230001", "STARTCAL");
    CHECK(r.handled_by == "transition");  // bare keyword means now
    r = w.text("+15551230001", "hello there");
    CHECK(r.handled_by == "rejected");
    CHECK(w.last_to("+15551230001") == std::string(study::kMessageNotUnderstood));
    r = w.text("+15551230001", "ENDCAL 25pm");
    CHECK(w.last_to("+15551230001") == std::string(study::kEndcalNotUnderstood));
    CHECK(w.engine.participant("P1").unrecognized == 2);
    CHECK(w.engine.participant("P1").messages_in == 3);
    CHECK(w.engine.participant("P1").current_state == "Eating");
}

TEST_CASE("after timers escalate a forgotten ENDCAL") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.until("2021-09-09T12:00:00Z");
    w.text("+15551230001", "startcal 8am");
    w.until("2021-09-09T23:00:00Z");
    CHECK(w.engine.participant("P1").current_state == "EatingLate");
    CHECK(w.last_to("+15551230001").find("11 hour limit") != std::string::npos);
    w.until("2021-09-10T12:00:00Z");
    CHECK(w.engine.participant("P1").current_state == "Stale");
    auto notes = of_kind(w.engine.audit_trail("P1"), AuditKind::notification);
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].detail["reason"] == "no ENDCAL within 24h of STARTCAL");
    CHECK(w.last_to("+15559990001") == "Participant P1: no ENDCAL within 24h of STARTCAL");
    // Timers of the states that were left are gone; Stale has none.
    CHECK(w.engine.scheduler().active().empty());
}

TEST_CASE("manual transitions") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    CHECK_THROWS_AS(w.engine.manual_transition("P1", "Nowhere", "rc", "test"), UnknownState);
    CHECK_THROWS_AS(w.engine.manual_transition("P9", "Eating", "rc", "test"), UnknownParticipant);
    CHECK(w.engine.participant("P1").current_state == "WaitingStart");

    auto out = w.engine.manual_transition("P1", "Stale", "rc", "testing escalation");
    CHECK(out.applied());
    const auto& m = w.engine.participant("P1");
    CHECK(m.current_state == "Stale");
    auto man = of_kind(w.engine.audit_trail("P1"), AuditKind::manual);
    REQUIRE(man.size() == 1);
    CHECK(man[0].detail["actor"] == "rc");
    CHECK(man[0].detail["reason"] == "testing escalation");
    CHECK(man[0].detail["from"] == "WaitingStart");
    CHECK(man[0].detail["to"] == "Stale");
    CHECK(man[0].detail["transition"].is_null());
    // Entry actions run: the escalation notifies staff.
    CHECK(of_kind(w.engine.audit_trail("P1"), AuditKind::notification).size() == 1);

    // A declared manual transition carries its index.
    out = w.engine.manual_transition("P1", "WaitingStart", "rc", "resolved");
    REQUIRE(out.transition);
    CHECK(of_kind(w.engine.audit_trail("P1"), AuditKind::manual).back().detail["transition"] == *out.transition);
}

TEST_CASE("terminal states complete the machine") {
    World w;
    w.emr.put({"P1", {{"Acebutolol", convo::DoseSchedule::morning}}, {}});
    const auto sid = w.study("optimalct");
    w.engine.register_participant(sid, "P1", "+15551230001");
    CHECK(w.last_to("+15551230001").rfind("Welcome to the beta blocker study", 0) == 0);
    w.engine.manual_transition("P1", "Documented", "rc", "done");
    const auto& m = w.engine.participant("P1");
    CHECK(m.status == MachineStatus::completed);
    CHECK(w.engine.scheduler().active().empty());
    auto r = w.text("+15551230001", "hello");
    CHECK(r.handled_by == "rejected");
    CHECK(m.current_state == "Documented");
}

TEST_CASE("medication check-in conversation") {
    World w;
    w.emr.put({"P1", {{"Acebutolol", convo::DoseSchedule::morning}}, {}});
    const auto sid = w.study("optimalct");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.engine.manual_transition("P1", "PreopMonitoring", "rc", "start");

    SUBCASE("adequate answer") {
        w.until("2021-09-10T13:00:00Z");  // 09:00 EDT
        CHECK(w.last_to("+15551230001") == "When did you last take your beta blocker?");
        REQUIRE(w.engine.open_session("P1"));
        w.until("2021-09-10T14:00:00Z");
        auto r = w.text("+15551230001", "I took it with my coffee this morning");
        CHECK(r.handled_by == "session");
        CHECK(r.answer == convo::AnswerOutcome::Kind::adequate);
        CHECK(w.last_to("+15551230001") == "Thank you, your dose has been recorded.");
        CHECK(w.engine.open_session("P1") == nullptr);
        const auto& m = w.engine.participant("P1");
        CHECK(m.current_state == "PreopMonitoring");
        CHECK(m.context.count("DidTakeMedication.when"));
        auto calls = of_kind(w.engine.audit_trail("P1"), AuditKind::tool_call);
        REQUIRE(calls.size() == 1);
        CHECK(calls[0].detail["outcome"] == "adequate");
        CHECK(calls[0].detail["extraction"].size() == 1);
    }
    SUBCASE("three inadequate answers escalate") {
        w.until("2021-09-10T13:00:00Z");
        w.text("+15551230001", "what?");
        CHECK(w.last_to("+15551230001").rfind("Could you tell us what time", 0) == 0);
        w.text("+15551230001", "huh");
        auto r = w.text("+15551230001", "blue");
        CHECK(r.answer == convo::AnswerOutcome::Kind::escalate);
        CHECK(w.engine.participant("P1").current_state == "MissedDose");
        auto notes = of_kind(w.engine.audit_trail("P1"), AuditKind::notification);
        REQUIRE(notes.size() == 1);  // MissedDose entry action only
        CHECK(notes[0].detail["reason"] == "beta blocker check-in not confirmed after three attempts");
        CHECK(w.engine.open_session("P1") == nullptr);
    }
    SUBCASE("backend failure still answers the participant") {
        struct Down : convo::LlmBackend {
            convo::ExtractionResult extract(const std::string&, const std::vector<const convo::ToolFunction*>&) override {
                throw convo::BackendUnavailable("timeout");
            }
            std::string generate_restatement(const convo::RestateRequest&) override {
                throw convo::BackendUnavailable("timeout");
            }
        } down;
        w.engine.set_backend(&down);
        w.until("2021-09-10T13:00:00Z");
        auto r = w.text("+15551230001", "this morning");
        CHECK(r.answer == convo::AnswerOutcome::Kind::restate);
        CHECK(w.last_to("+15551230001") ==
              "Sorry, I did not understand. When did you last take your beta blocker?");
        auto calls = of_kind(w.engine.audit_trail("P1"), AuditKind::tool_call);
        REQUIRE(calls.size() == 1);
        CHECK(calls[0].detail["backend_errors"].size() == 2);
    }
}

TEST_CASE("plant diet photo and rating") {
    World w;
    const auto sid = w.study("plant_diet");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.until("2021-09-09T12:00:00Z");  // 08:00 breakfast prompt
    CHECK(w.engine.participant("P1").current_state == "AwaitingPhoto");
    gateway::InboundMessage m;
    m.from_address = "+15551230001";
    m.attachments.push_back({"image/jpeg", 1234, "sha256:abc"});
    m.received_at = w.clock.now();
    auto r = w.engine.receive(m);
    CHECK(r.handled_by == "transition");
    CHECK(w.engine.participant("P1").current_state == "Rating");
    r = w.text("+15551230001", "4");
    CHECK(r.answer == convo::AnswerOutcome::Kind::adequate);
    const auto& p = w.engine.participant("P1");
    CHECK(p.current_state == "Idle");
    CHECK(p.context.at("MealRating.rating") == Value(std::string("4")));
}

TEST_CASE("dead letters and failed sends notify staff") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    auto r = w.text("+15559999999", "STARTCAL 7am");
    CHECK(r.dead_letter);
    CHECK(w.engine.stats().dead_letters == 1);
    CHECK(w.last_to(kStaff) == "message from unregistered sender +15559999999");
    r = w.text("garbage", "x");
    CHECK(r.dead_letter);

    w.sms.fail_next(5);
    w.until("2021-09-09T12:00:00Z");
    w.text("+15551230001", "STARTCAL 7am");
    w.until("2021-09-09T12:10:00Z");
    auto outs = of_kind(w.engine.audit_trail("P1"), AuditKind::message_out);
    REQUIRE(outs.size() == 5);
    CHECK(outs.back().detail["status"] == "failed");
    auto notes = of_kind(w.engine.audit_trail("P1"), AuditKind::notification);
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].detail["reason"].get<std::string>().find("undeliverable after 5 attempts") != std::string::npos);
}

TEST_CASE("withdrawal stops timers and messages") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.engine.withdraw("P1", "rc", "asked to stop");
    CHECK(w.engine.participant("P1").status == MachineStatus::withdrawn);
    CHECK(w.engine.scheduler().active().empty());
    CHECK_THROWS(w.engine.manual_transition("P1", "Eating", "rc", "x"));
    CHECK(w.text("+15551230001", "STARTCAL 7am").handled_by == "rejected");
}

TEST_CASE("replay of a trail reproduces the state") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    w.until("2021-09-09T12:00:00Z");
    w.text("+15551230001", "STARTCAL 7am");
    w.until("2021-09-10T13:00:00Z");
    w.engine.manual_transition("P1", "WaitingStart", "rc", "reset");
    const auto& proto = w.pack("tre")->protocol;
    CHECK(replay(w.engine.audit_trail("P1"), proto) == w.engine.participant("P1").current_state);

    auto other = make_pack("tre2", "protocol \"x\" { state A initial; state B; A -> B on manual; }");
    CHECK_THROWS_AS(replay(w.engine.audit_trail("P1"), other->protocol), std::invalid_argument);
    CHECK_THROWS_AS(replay({}, proto), std::invalid_argument);
}

TEST_CASE("property: trails, rejections and audit completeness under random traffic") {
    const std::vector<std::string> bodies = {"STARTCAL 7am", "startcal", "ENDCAL 5pm", "endcal 9:30pm", "endcal",
                                             "STARTCAL 11:15 am", "hello", "", "ENDCAL 7.45p.m.", "STARTCAL 25:00",
                                             "startcal 6pm", "endcal 2am"};
    std::mt19937_64 rng(7);
    for (int round = 0; round < 10; ++round) {
        World w;
        const auto sid = w.study("tre");
        std::vector<std::string> pids;
        for (int i = 0; i < 5; ++i) {
            pids.push_back("P" + std::to_string(i));
            w.engine.register_participant(sid, pids.back(), "+1555123000" + std::to_string(i));
        }
        std::int64_t sent = 0;
        for (int step = 0; step < 150; ++step) {
            w.until(w.clock.now() + Duration(static_cast<std::int64_t>(rng() % (3 * 3600'000))));
            const auto i = rng() % pids.size();
            if (rng() % 25 == 0) {
                w.engine.manual_transition(pids[i], rng() % 2 ? "WaitingStart" : "Eating", "rc", "fuzz");
                continue;
            }
            const auto before = w.engine.participant(pids[i]);
            const auto seq = w.engine.next_seq();
            auto r = w.text("+1555123000" + std::to_string(i), bodies[rng() % bodies.size()]);
            ++sent;
            const auto& after = w.engine.participant(pids[i]);
            if (r.handled_by == "rejected") {
                CHECK(after.current_state == before.current_state);
                CHECK(after.context == before.context);
                CHECK(after.state_entered_at == before.state_entered_at);
            }
            // Every state change in this call has a transition record.
            if (after.current_state != before.current_state) {
                bool found = false;
                for (const auto& rec : w.engine.audit(AuditFilter{pids[i], std::nullopt, std::nullopt, std::nullopt})) {
                    if (rec.seq >= seq && rec.kind == AuditKind::transition && rec.detail["to"] == after.current_state)
                        found = true;
                }
                CHECK(found);
            }
        }
        CHECK(w.engine.stats().messages_in == sent);
        CHECK(of_kind(w.engine.audit_log(), AuditKind::message_in).size() == static_cast<std::size_t>(sent));
        for (const auto& pid : pids) {
            CHECK(replay(w.engine.audit_trail(pid), w.pack("tre")->protocol) ==
                  w.engine.participant(pid).current_state);
            CHECK(study::recount(w.engine.audit_log()).at(pid) == study::tally(w.engine.participant(pid)));
        }
        // Sequence numbers are dense and timestamps non-decreasing.
        const auto& log = w.engine.audit_log();
        for (std::size_t k = 1; k < log.size(); ++k) {
            CHECK(log[k].seq == log[k - 1].seq + 1);
            CHECK(log[k].timestamp >= log[k - 1].timestamp);
        }
    }
}

TEST_CASE("snapshot plus audit tail recovers the exact state") {
    World a;
    a.emr.put({"P1", {{"Acebutolol", convo::DoseSchedule::morning}}, {}});
    const auto tre = a.study("tre");
    const auto oct = a.study("optimalct");
    a.engine.register_participant(tre, "T1", "+15551230001");
    a.engine.register_participant(oct, "P1", "+15551230002");
    a.engine.manual_transition("P1", "PreopMonitoring", "rc", "start");
    a.until("2021-09-09T12:00:00Z");
    a.text("+15551230001", "STARTCAL 7am");

    const auto snap = a.engine.encode();
    const auto from_seq = a.engine.next_seq();
    a.engine.mark_snapshot({{"sequence", from_seq}});

    a.sms.fail_next(2);
    a.until("2021-09-10T13:00:00Z");
    a.text("+15551230002", "what?");
    a.text("+15551230002", "this morning with breakfast");
    a.text("+15551230001", "ENDCAL 6pm");
    a.text("+15551239999", "who is this");
    a.until("2021-09-12T02:00:00Z");
    a.engine.withdraw("T1", "rc", "done");

    std::vector<AuditRecord> tail;
    for (const auto& r : a.engine.audit_log()) {
        if (r.seq >= from_seq) tail.push_back(r);
    }

    SUBCASE("identical") {
        sched::VirtualClock clock(a.clock.now());
        Engine b(engine_options(), clock, a.bindings);
        b.set_emr(&a.emr);
        gateway::SimGateway sms;
        b.set_provider(&sms);
        b.restore(snap, a.resolver());
        b.recover(tail, a.resolver());
        CHECK(comparable(b.encode()) == comparable(a.engine.encode()));
        CHECK(b.stats() == a.engine.stats());
        CHECK(sms.attempts() == 0);  // replay never re-sends
    }
    SUBCASE("a tampered log diverges") {
        for (auto& r : tail) {
            if (r.kind == AuditKind::transition) {
                r.detail["to"] = "Eating";
                break;
            }
        }
        sched::VirtualClock clock(a.clock.now());
        Engine b(engine_options(), clock, a.bindings);
        b.set_emr(&a.emr);
        b.restore(snap, a.resolver());
        CHECK_THROWS_AS(b.recover(tail, a.resolver()), ReplayDivergence);
    }
    SUBCASE("a changed pack is refused") {
        sched::VirtualClock clock(a.clock.now());
        Engine b(engine_options(), clock, a.bindings);
        auto changed = make_pack("tre", "protocol \"tre\" { meta interpreter \"tre\"; state WaitingStart initial; }");
        PackResolver r = [&](const std::string& name) { return name == "tre" ? changed : a.pack(name); };
        CHECK_THROWS_AS(b.restore(snap, r), PackMismatch);
    }
}

TEST_CASE("encode is stable") {
    World w;
    const auto sid = w.study("tre");
    w.engine.register_participant(sid, "P1", "+15551230001");
    CHECK(w.engine.encode() == w.engine.encode());
    World v;
    v.engine.restore(w.engine.encode(), w.resolver());
    auto a = w.engine.encode();
    auto b = v.engine.encode();
    CHECK(comparable(a) == comparable(b));
}
