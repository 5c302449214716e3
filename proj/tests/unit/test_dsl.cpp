#include <doctest.h>

#include <deque>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "protoflow/dsl/compiler.hpp"
#include "protoflow/dsl/dot.hpp"
#include "protoflow/dsl/lexer.hpp"
#include "protoflow/dsl/parser.hpp"
#include "protoflow/dsl/validator.hpp"
#include "support/dot_reader.hpp"
#include "support/graph_gen.hpp"

using namespace protoflow;
using namespace protoflow::dsl;

namespace {

const char* kSeatBooking = R"(
// Airline seat booking
protocol "seat_booking" {
    state Browsing initial;
    state SeatSelected;
    state SeatHeld { schedule hold_expiry 15m; exit cancel hold_expiry; };
    state Paid;
    state Ticketed terminal;
    state Abandoned terminal;

    Browsing -> SeatSelected on message "select";
    SeatSelected -> Browsing on message "back";
    SeatSelected -> SeatHeld on message "hold";
    SeatHeld -> Paid on tool Payment:approved do send "receipt";
    SeatHeld -> SeatSelected on tool Payment:declined do send "declined";
    SeatHeld -> Abandoned on timer hold_expiry;
    Paid -> Ticketed on manual do send "ticket";
}
)";

const char* kTreSimplified = R"(
protocol "tre_simple" {
    state WaitingStart initial;
    state Eating;
    WaitingStart -> Eating on message "startcal";
    Eating -> WaitingStart on message "endcal";
}
)";

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ProtocolGraph parse_ok(std::string_view src) {
    auto r = parse_protocol(src);
    for (const auto& d : r.diagnostics) INFO(format_diagnostic("src", d));
    REQUIRE(r.ok());
    return *r.graph;
}

std::multiset<testing::DotEdge> graph_edges(const ProtocolGraph& g) {
    std::multiset<testing::DotEdge> out;
    for (const auto& t : g.transitions) {
        out.insert({t.from, t.to, trigger_key(t.trigger) + (t.guard ? " [" + *t.guard + "]" : "")});
    }
    return out;
}

std::set<std::string> graph_states(const ProtocolGraph& g) {
    std::set<std::string> out;
    for (const auto& s : g.states) out.insert(s.name);
    return out;
}

int count(const std::vector<CompileDiagnostic>& ds, Severity s) {
    int n = 0;
    for (const auto& d : ds) n += d.severity == s;
    return n;
}

} // namespace

TEST_CASE("minimal protocol") {
    auto g = parse_ok(R"(protocol "p" { state A initial terminal; })");
    CHECK(g.protocol_id == "p");
    REQUIRE(g.states.size() == 1);
    CHECK(g.states[0].initial);
    CHECK(g.states[0].terminal);
    CHECK(g.transitions.empty());
}

TEST_CASE("seat booking graph") {
    auto g = parse_ok(kSeatBooking);
    CHECK(graph_states(g) ==
          std::set<std::string>{"Browsing", "SeatSelected", "SeatHeld", "Paid", "Ticketed", "Abandoned"});
    CHECK(g.transitions.size() == 7);
    const auto* held = g.find_state("SeatHeld");
    REQUIRE(held);
    REQUIRE(held->entry_actions.size() == 1);
    CHECK(held->entry_actions[0].kind == ActionKind::schedule);
    CHECK(held->entry_actions[0].arguments == std::vector<std::string>{"hold_expiry", "15m"});
    REQUIRE(held->exit_actions.size() == 1);
    CHECK(held->exit_actions[0].kind == ActionKind::cancel);
    CHECK(validate_graph(g).empty());
}

TEST_CASE("undeclared state is named in the diagnostic") {
    const char* src = R"(protocol "p" {
  state A initial;
  A -> X on message "go";
})";
    auto r = parse_protocol(src);
    CHECK_FALSE(r.ok());
    // Oracle: every name used as an endpoint but absent from the declared set.
    std::set<std::string> declared{"A"};
    std::set<std::string> used{"A", "X"};
    for (const auto& name : used) {
        if (declared.count(name)) continue;
        bool found = false;
        for (const auto& d : r.diagnostics) found |= d.severity == Severity::error && d.message.find("'" + name + "'") != std::string::npos;
        CHECK_MESSAGE(found, name);
    }
    REQUIRE(!r.diagnostics.empty());
    CHECK(r.diagnostics[0].location.line == 3);
}

TEST_CASE("parse errors") {
    SUBCASE("duplicate state") {
        auto r = parse_protocol(R"(protocol "p" { state A initial; state A; })");
        REQUIRE_FALSE(r.ok());
        CHECK(r.diagnostics[0].message.find("duplicate state 'A'") != std::string::npos);
    }
    SUBCASE("unknown trigger kind") {
        auto r = parse_protocol(R"(protocol "p" { state A initial; state B; A -> B on webhook "x"; })");
        REQUIRE_FALSE(r.ok());
        CHECK(r.diagnostics[0].message.find("unknown trigger kind 'webhook'") != std::string::npos);
    }
    SUBCASE("malformed declaration") {
        auto r = parse_protocol(R"(protocol "p" { state A initial; A -> ; })");
        REQUIRE_FALSE(r.ok());
        CHECK(r.diagnostics[0].severity == Severity::error);
        CHECK(r.diagnostics[0].location.line == 1);
    }
    SUBCASE("recovery reports several errors") {
        auto r = parse_protocol("protocol \"p\" {\n state A initial;\n state A;\n A -> B on message \"x\";\n}");
        CHECK(count(r.diagnostics, Severity::error) == 2);
    }
    SUBCASE("bad duration") {
        auto r = parse_protocol(R"(protocol "p" { state A initial; A -> A on after 5w; })");
        CHECK_FALSE(r.ok());
    }
}

TEST_CASE("diagnostic formatting") {
    CompileDiagnostic d{Severity::warning, {4, 7}, "state 'Z' is unreachable"};
    CHECK(format_diagnostic("tre.pfp", d) == "tre.pfp:4:7: warning: state 'Z' is unreachable");
}

TEST_CASE("validate_graph") {
    SUBCASE("TRE simplified graph is clean") {
        CHECK(validate_graph(parse_ok(kTreSimplified)).empty());
    }
    SUBCASE("two initial states give one error") {
        auto g = parse_ok(R"(protocol "p" { state A initial; state B initial; A -> B on manual; })");
        auto ds = validate_graph(g);
        CHECK(ds.size() == 1);
        CHECK(count(ds, Severity::error) == 1);
    }
    SUBCASE("orphan state gives one warning") {
        auto g = parse_ok(R"(protocol "p" {
            state A initial; state B; state Orphan;
            A -> B on message "go"; B -> A on after 2h; Orphan -> A on manual;
        })");
        // BFS oracle over the parsed edges.
        std::map<std::string, std::vector<std::string>> adj;
        for (const auto& t : g.transitions) adj[t.from].push_back(t.to);
        std::set<std::string> seen{"A"};
        std::deque<std::string> q{"A"};
        while (!q.empty()) {
            auto cur = q.front();
            q.pop_front();
            for (const auto& n : adj[cur]) {
                if (seen.insert(n).second) q.push_back(n);
            }
        }
        const int expected = static_cast<int>(g.states.size() - seen.size());
        auto ds = validate_graph(g);
        CHECK(expected == 1);
        CHECK(ds.size() == 1);
        CHECK(count(ds, Severity::warning) == expected);
        CHECK(ds[0].message.find("Orphan") != std::string::npos);
    }
    SUBCASE("ambiguous trigger") {
        auto g = parse_ok(R"(protocol "p" { state A initial; state B; state C;
            A -> B on message "x"; A -> C on message "x"; B -> A on manual; C -> A on manual; })");
        auto ds = validate_graph(g);
        REQUIRE(ds.size() == 1);
        CHECK(ds[0].severity == Severity::error);
        CHECK(ds[0].message.find("ambiguous") != std::string::npos);
    }
    SUBCASE("same trigger with distinct guards is fine") {
        auto g = parse_ok(R"(protocol "p" { state A initial; state B; state C;
            A -> B on message "x" guard g1; A -> C on message "x" guard g2; B -> A on manual; C -> A on manual; })");
        CHECK(validate_graph(g).empty());
    }
    SUBCASE("terminal exits and escalation without notification") {
        auto g = parse_ok(R"(protocol "p" { state A initial; state T terminal; state E escalation;
            A -> T on manual; T -> A on manual; A -> E on after 1d; E -> A on manual; })");
        auto ds = validate_graph(g);
        CHECK(count(ds, Severity::error) == 2);
    }
    SUBCASE("unknown guard with registry") {
        auto g = parse_ok(R"(protocol "p" { state A initial; A -> A on message "x" guard nope; })");
        std::set<std::string> guards{"yes"};
        CHECK(validate_graph(g).empty());
        CHECK(count(validate_graph(g, &guards), Severity::error) == 1);
    }
    SUBCASE("unscheduled named timer warns") {
        auto g = parse_ok(R"(protocol "p" { state A initial; A -> A on timer t; })");
        auto ds = validate_graph(g);
        CHECK(ds.size() == 1);
        CHECK(count(ds, Severity::warning) == 1);
    }
}

TEST_CASE("compile") {
    SUBCASE("TRE simplified table") {
        auto c = compile(parse_ok(kTreSimplified));
        auto ws = *c.state_index("WaitingStart");
        auto eating = *c.state_index("Eating");
        CHECK(c.initial_state() == ws);
        REQUIRE(c.candidates(ws, "message \"startcal\"").size() == 1);
        REQUIRE(c.candidates(eating, "message \"endcal\"").size() == 1);
        CHECK(c.candidates(ws, "message \"endcal\"").empty());
        CHECK(c.transitions()[c.candidates(ws, "message \"startcal\"")[0]].to == eating);
    }
    SUBCASE("one entry per transition") {
        auto g = parse_ok(kSeatBooking);
        auto c = compile(g);
        std::size_t entries = 0;
        for (std::size_t s = 0; s < c.states().size(); ++s) {
            std::set<std::string> keys;
            for (const auto& t : c.transitions()) {
                if (t.from == s) keys.insert(t.key);
            }
            for (const auto& k : keys) entries += c.candidates(s, k).size();
        }
        CHECK(entries == g.transitions.size());
    }
    SUBCASE("single state") {
        auto c = compile_source(R"(protocol "p" { state A initial terminal; })");
        CHECK(c.transitions().empty());
        CHECK(c.states().size() == 1);
    }
    SUBCASE("deterministic") {
        auto a = compile_source(kSeatBooking);
        auto b = compile_source(kSeatBooking);
        CHECK(a.version_hash() == b.version_hash());
        CHECK(a.encode() == b.encode());
    }
    SUBCASE("hash ignores comments and layout") {
        std::string reflowed = "# header\nprotocol \"tre_simple\"{state WaitingStart initial;state Eating;\n"
                               "WaitingStart->Eating on message \"startcal\"; // go\n"
                               "Eating -> WaitingStart on message \"endcal\";}";
        auto a = compile_source(kTreSimplified);
        auto b = compile_source(reflowed);
        CHECK(a.version_hash() == b.version_hash());
        CHECK(a.encode() == b.encode());
    }
    SUBCASE("hash changes with semantics") {
        std::string edited = kTreSimplified;
        edited.replace(edited.find("endcal"), 6, "stopcal");
        CHECK(compile_source(kTreSimplified).version_hash() != compile_source(edited).version_hash());
    }
    SUBCASE("rejects graphs with errors") {
        CHECK_THROWS_AS(compile_source(R"(protocol "p" { state A; })"), CompileError);
    }
    SUBCASE("state timers") {
        auto c = compile_source(R"(protocol "p" { state A initial; state B;
            A -> B on after 11h; A -> A on at 20:00 guard g; A -> B on at 20:00; B -> A on message "x"; })");
        CHECK(c.state(0).state_timers == std::vector<std::string>{"after 11h", "at 20:00"});
        CHECK(c.candidates(0, "at 20:00").size() == 2);
    }
}

TEST_CASE("trigger keys round-trip") {
    for (const char* k : {"message \"startcal\"", "after 11h", "after 90m", "at 20:00", "at 06:05",
                          "tool DidTakeMedication:adequate", "timer photo_deadline", "manual"}) {
        auto t = parse_trigger_key(k);
        REQUIRE(t);
        CHECK(trigger_key(*t) == k);
    }
    CHECK_FALSE(parse_trigger_key("bogus 1"));
}

TEST_CASE("pretty printer re-parses to the same graph") {
    auto g = parse_ok(kSeatBooking);
    auto g2 = parse_ok(to_source(g));
    CHECK(compile(g).encode() == compile(g2).encode());
}

TEST_CASE("export_dot") {
    SUBCASE("one state") {
        auto d = testing::read_dot(export_dot(parse_ok(R"(protocol "p" { state A initial terminal; })")));
        CHECK(d.is_digraph);
        CHECK(d.nodes.size() == 1);
        CHECK(d.nodes.count("A"));
        CHECK(d.nodes["A"].find("initial") != std::string::npos);
        CHECK(d.edges.empty());
    }
    SUBCASE("TRE simplified") {
        auto g = parse_ok(kTreSimplified);
        auto d = testing::read_dot(export_dot(g));
        CHECK(d.nodes.size() == 2);
        CHECK(d.edges == graph_edges(g));
        CHECK(d.edges.count({"WaitingStart", "Eating", "message \"startcal\""}) == 1);
        CHECK(d.edges.count({"Eating", "WaitingStart", "message \"endcal\""}) == 1);
    }
    SUBCASE("shipped TRE pack has timer edges labelled with durations") {
        auto g = parse_ok(read_text(PROTOFLOW_SOURCE_DIR "/packs/tre/protocol.pfp"));
        auto d = testing::read_dot(export_dot(g));
        CHECK(d.edges == graph_edges(g));
        for (const auto& s : g.states) CHECK(d.nodes.count(s.name));
        CHECK(d.edges.count({"Eating", "EatingLate", "after 11h"}) == 1);
        CHECK(d.edges.count({"EatingLate", "Stale", "after 13h"}) == 1);
        CHECK(d.edges.count({"WaitingStart", "WaitingStart", "at 20:00 [no_start_today]"}) == 1);
    }
}

TEST_CASE("property: DOT read-back preserves states and transitions") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        auto g = testing::random_graph(rng);
        auto reparsed = parse_ok(to_source(g));
        auto d = testing::read_dot(export_dot(reparsed));
        std::set<std::string> nodes;
        for (const auto& [n, _] : d.nodes) nodes.insert(n);
        CHECK(nodes == graph_states(g));
        CHECK(d.edges == graph_edges(g));
    }
}

TEST_CASE("property: injected defects are detected with the right severity") {
    using testing::Defect;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 400; ++i) {
        const auto defect = static_cast<Defect>(i % 5);
        auto g = testing::random_graph(rng);
        testing::inject(g, defect, rng);
        auto ds = validate_graph(g);
        INFO("defect: " << testing::defect_name(defect) << "\n" << to_source(g));
        switch (defect) {
        case Defect::none: CHECK(ds.empty()); break;
        case Defect::duplicate_initial:
            REQUIRE(ds.size() == 1);
            CHECK(ds[0].severity == Severity::error);
            CHECK(ds[0].message.find("multiple initial") != std::string::npos);
            break;
        case Defect::unreachable_state:
            REQUIRE(ds.size() == 1);
            CHECK(ds[0].severity == Severity::warning);
            CHECK(ds[0].message.find("Orphan") != std::string::npos);
            break;
        case Defect::dangling_target:
            REQUIRE(ds.size() == 1);
            CHECK(ds[0].severity == Severity::error);
            CHECK(ds[0].message.find("'Ghost'") != std::string::npos);
            break;
        case Defect::ambiguous_trigger:
            REQUIRE(ds.size() == 1);
            CHECK(ds[0].severity == Severity::error);
            CHECK(ds[0].message.find("ambiguous") != std::string::npos);
            break;
        }
    }
}

TEST_CASE("property: diagnostic locations stay within the source") {
    std::mt19937_64 rng(3);
    const std::string base = kSeatBooking;
    const std::string alphabet = "{};->\"#/ \n\tabcXYZ019:,h";
    for (int i = 0; i < 2000; ++i) {
        std::string src = base;
        const int edits = 1 + static_cast<int>(rng() % 6);
        for (int e = 0; e < edits; ++e) {
            const auto pos = rng() % (src.size() + 1);
            switch (rng() % 3) {
            case 0: if (pos < src.size()) src.erase(pos, 1 + rng() % 8); break;
            case 1: src.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
            default: if (pos < src.size()) src[pos] = static_cast<char>(rng() % 256); break;
            }
        }
        // Line lengths in columns (bytes; columns never exceed byte counts).
        std::vector<std::size_t> lines{0};
        for (char c : src) {
            if (c == '\n') lines.push_back(0);
            else ++lines.back();
        }
        auto r = parse_protocol(src);
        std::vector<CompileDiagnostic> all = r.diagnostics;
        if (r.ok()) {
            auto v = validate_graph(*r.graph);
            all.insert(all.end(), v.begin(), v.end());
        }
        for (const auto& d : all) {
            INFO(format_diagnostic("mutated", d));
            REQUIRE(d.location.line >= 1);
            REQUIRE(static_cast<std::size_t>(d.location.line) <= lines.size());
            REQUIRE(d.location.column >= 1);
            REQUIRE(static_cast<std::size_t>(d.location.column) <= lines[d.location.line - 1] + 1);
        }
    }
}

TEST_CASE("lexer") {
    auto r = tokenize("state A; # note\nA -> B on after 11h at 20:00 // x\n");
    CHECK(r.diagnostics.empty());
    std::vector<TokenKind> kinds;
    for (const auto& t : r.tokens) kinds.push_back(t.kind);
    CHECK(kinds == std::vector<TokenKind>{TokenKind::identifier, TokenKind::identifier, TokenKind::semicolon,
                                          TokenKind::identifier, TokenKind::arrow, TokenKind::identifier,
                                          TokenKind::identifier, TokenKind::identifier, TokenKind::duration,
                                          TokenKind::identifier, TokenKind::time, TokenKind::end_of_input});
    CHECK(r.tokens[3].location == SourceLocation{2, 1});
}
