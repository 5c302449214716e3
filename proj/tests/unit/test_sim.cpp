#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "protoflow/persist/audit_log.hpp"
#include "protoflow/sim/load.hpp"
#include "protoflow/sim/scenario.hpp"
#include "protoflow/study/tre.hpp"
#include "support/temp_dir.hpp"
#include "support/world.hpp"

using namespace protoflow;
using namespace protoflow::sim;
using namespace pftest;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kPacks = std::string(PROTOFLOW_SOURCE_DIR) + "/packs";

RunOptions in_memory() {
    RunOptions o;
    o.packs_dir = kPacks;
    return o;
}

RunOptions on_disk(const std::string& dir) {
    auto o = in_memory();
    o.data_dir = dir;
    o.fsync = false;
    return o;
}

ScenarioConfig paper_cohort() {
    return ScenarioConfig::load(std::string(PROTOFLOW_SOURCE_DIR) + "/scenarios/tre_cohort.toml");
}

ScenarioConfig small(std::uint64_t seed) {
    ScenarioConfig c;
    c.seed = seed;
    c.cohort_size = 12;
    c.duration_days = 4;
    c.mix = {0.5, 0.15, 0.15, 0.1, 0.1};
    return c;
}

std::multiset<std::string> firings(const std::vector<runtime::AuditRecord>& rs) {
    std::multiset<std::string> out;
    for (const auto& r : rs) {
        if (r.kind == runtime::AuditKind::timer && r.detail.value("action", "") == "fired") {
            out.insert(r.participant_id + "/" + r.detail.at("timer_id").get<std::string>() + "@" +
                       r.detail.at("due_at").get<std::string>());
        }
    }
    return out;
}

} // namespace

TEST_CASE("scenario config") {
    auto c = paper_cohort();
    CHECK(c.cohort_size == 163);
    CHECK(c.duration_days == 30);
    CHECK(c.mix.compliant == doctest::Approx(0.92));
    CHECK(c.timezone == "America/New_York");

    auto corpus = ScenarioConfig::load(std::string(PROTOFLOW_SOURCE_DIR) + "/scenarios/error_corpus.toml");
    REQUIRE(corpus.corpus);
    CHECK(corpus.corpus->messages == 24403);
    CHECK(corpus.corpus->unrecognized == 858);

    auto bad = [](json j) { CHECK_THROWS_AS(ScenarioConfig::from_json(j), ScenarioError); };
    bad({{"mix", {{"compliant", 0.9}, {"short", 0.05}}}});
    bad({{"mix", {{"compliant", 0.5}, {"greedy", 0.5}}}});
    bad({{"mix", {{"compliant", 1.2}, {"short", -0.2}}}});
    bad({{"scenario", {{"cohort_size", -1}}}});
    bad({{"scenario", {{"cohort_size", "many"}}}});
    bad({{"scenario", {{"timezone", "Mars/Base"}}}});
    bad({{"ambiguous", {{"probability", 2}}}});
    bad({{"corpus", {{"messages", 10}, {"unrecognized", 11}}}});
}

TEST_CASE("behavior split") {
    auto b = assign_behaviors(paper_cohort());
    std::map<Behavior, int> n;
    for (auto x : b) ++n[x];
    CHECK(n[Behavior::compliant] == 150);
    CHECK(n[Behavior::short_window] + n[Behavior::long_window] == 13);
    CHECK(b.size() == 163);
}

TEST_CASE("an empty cohort gives an empty report") {
    ScenarioConfig c;
    c.cohort_size = 0;
    auto r = run_scenario(c, in_memory());
    CHECK(r["metrics"]["participants"] == 0);
    CHECK(r["metrics"]["total_incoming"] == 0);
    CHECK(r["metrics"]["success_rate_defined"] == false);
    CHECK(r["recount_matches"] == true);
}

TEST_CASE("the paper's cohort reaches 92%") {
    auto r = run_scenario(paper_cohort(), in_memory());
    const double rate = r["metrics"]["success_rate"];
    CHECK(std::abs(rate - 0.92) <= 0.01);
    CHECK(r["recount_matches"] == true);
    CHECK(r["metrics"] == r["recount"]);
    CHECK(r["metrics"]["days_enrolled"] == 163 * 30);
    CHECK(r["metrics"]["successful_fasts"] == 150 * 30);
}

TEST_CASE("same seed, same bytes") {
    auto c = small(11);
    CHECK(run_scenario(c, in_memory()).dump() == run_scenario(c, in_memory()).dump());
    auto p1 = plan_scenario(c), p2 = plan_scenario(small(12));
    std::vector<std::string> a, b;
    for (const auto& m : p1.messages) a.push_back(m.body + format_rfc3339(m.at));
    for (const auto& m : p2.messages) b.push_back(m.body + format_rfc3339(m.at));
    CHECK(a != b);
}

TEST_CASE("planned messages parse as intended") {
    auto c = small(5);
    c.mix = {0.5, 0.0, 0.0, 0.5, 0.0};
    c.ambiguous_probability = 1.0;
    const auto tz = TimeZone::load(c.timezone);
    for (const auto& m : plan_scenario(c).messages) {
        auto p = study::parse_tre_message(m.body, m.at, tz);
        INFO(m.body);
        CHECK(p.recognized() == !m.malformed);
        if (p.recognized()) CHECK(p.at <= m.at);
    }
}

TEST_CASE("error corpus") {
    auto c = ScenarioConfig::load(std::string(PROTOFLOW_SOURCE_DIR) + "/scenarios/error_corpus.toml");
    auto r = run_scenario(c, in_memory());
    CHECK(r["planned_messages"] == 24403);
    CHECK(r["metrics"]["total_incoming"] == 24403);
    CHECK(r["metrics"]["unrecognized_messages"] == 858);
    CHECK(r["metrics"]["error_rate"].get<double>() == 858.0 / 24403.0);
    CHECK(r["recount_matches"] == true);
}

TEST_CASE("ambiguous senders") {
    auto c = paper_cohort();
    c.mix = {0.965, 0, 0, 0.035, 0};
    c.ambiguous_probability = 1.0;
    c.duration_days = 73;
    auto r = run_scenario(c, in_memory());
    const double e = r["metrics"]["error_rate"];
    CHECK(std::abs(e - 0.035) <= 0.002);
    // Garbled first tries are corrected, so nobody's adherence suffers.
    CHECK(r["metrics"]["success_rate"] == 1.0);
}

TEST_CASE("replay from the audit directory") {
    TempDir d("pf-sim");
    auto c = small(21);
    auto live = run_scenario(c, on_disk(d.path));
    auto replayed = replay_scenario(d.path + "/audit");
    CHECK(replayed["metrics"] == live["metrics"]);
    CHECK(replayed["as_of"] == live["as_of"]);

    SUBCASE("empty log") {
        TempDir e("pf-sim-empty");
        auto r = replay_scenario(e.path);
        CHECK(r["records"] == 0);
        CHECK(r["metrics"]["participants"] == 0);
    }
    SUBCASE("truncated log") {
        const auto seg = d.path + "/audit/segment-1.log";
        fs::resize_file(seg, fs::file_size(seg) - 7);
        try {
            replay_scenario(d.path + "/audit");
            FAIL("expected corruption");
        } catch (const persist::AuditCorruption& e) {
            CHECK(std::string(e.what()).find("segment-1.log") != std::string::npos);
            CHECK(e.failures().back().reason == "truncated record");
        }
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(replay_scenario(d.path + "/nope"), ScenarioError); }
}

TEST_CASE("kill and restore") {
    std::mt19937_64 rng(99);
    for (int run = 0; run < 4; ++run) {
        TempDir a("pf-kill-a"), b("pf-kill-b");
        auto c = small(100 + run);
        const auto n = plan_scenario(c).messages.size();
        auto whole = run_scenario(c, on_disk(a.path));
        auto o = on_disk(b.path);
        o.kill_after = {1 + rng() % n, 1 + rng() % n};
        auto killed = run_scenario(c, o);
        CHECK(killed["metrics"] == whole["metrics"]);
        CHECK(killed["restarts"].get<int>() >= 1);
        const auto ra = persist::AuditLog::read_dir(a.path + "/audit");
        const auto rb = persist::AuditLog::read_dir(b.path + "/audit");
        CHECK(ra == rb);
        const auto f = firings(rb);
        CHECK(f == firings(ra));
        CHECK(std::set<std::string>(f.begin(), f.end()).size() == f.size());
    }
    CHECK_THROWS_AS(run_scenario(small(1), [] {
                        auto o = in_memory();
                        o.kill_after = {3};
                        return o;
                    }()),
                    ScenarioError);
}

TEST_CASE("outbound bursts") {
    auto one = outbound_burst(250, 1);
    CHECK(one["dispatched"] == 250);
    CHECK(one["max_in_one_second"] == 100);
    auto three = outbound_burst(250, 3);
    CHECK(three["dispatched"] == 250);
    CHECK(three["max_per_number_in_one_second"].get<int>() <= 100);
    CHECK(three["drain_ms"].get<std::int64_t>() <= 1000);
    CHECK(outbound_burst(0, 1)["dispatched"] == 0);
}

TEST_CASE("short load test") {
    LoadOptions o;
    o.packs_dir = kPacks;
    o.rate = 20;
    o.seconds = 2;
    o.cohort = 10;
    auto r = load_test(o);
    CHECK(r["processed"] == 40);
    CHECK(r["failed"] == 0);
    CHECK(r["engine"]["messages_in"] == 40);
}
