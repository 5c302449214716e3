#include "protoflow/dsl/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>

#include "protoflow/dsl/lexer.hpp"

namespace protoflow::dsl {

namespace {

constexpr std::array kReserved = {
    "protocol", "state",   "on",     "guard", "do",       "initial", "terminal", "escalation",
    "message",  "after",   "at",     "tool",  "timer",    "manual",  "send",     "schedule",
    "cancel",   "metric",  "notify_staff", "template", "meta", "exit",
};

bool reserved(std::string_view word) {
    return std::find(kReserved.begin(), kReserved.end(), word) != kReserved.end();
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct SyntaxError {
    CompileDiagnostic diagnostic;
};

class Parser {
public:
    Parser(std::vector<Token> tokens, std::vector<CompileDiagnostic>& diags)
        : toks_(std::move(tokens)), diags_(diags) {}

    ProtocolGraph parse_file() {
        ProtocolGraph g;
        try {
            g.location = peek().location;
            expect_word("protocol");
            g.protocol_id = expect(TokenKind::string, "protocol name string").text;
            expect(TokenKind::lbrace, "'{'");
        } catch (const SyntaxError& e) {
            diags_.push_back(e.diagnostic);
            return g;
        }
        while (!at(TokenKind::rbrace) && !at(TokenKind::end_of_input)) {
            try {
                item(g);
            } catch (const SyntaxError& e) {
                diags_.push_back(e.diagnostic);
                recover();
            }
        }
        if (at(TokenKind::end_of_input)) {
            error_at(peek(), "missing '}' closing protocol");
            return g;
        }
        next();  // '}'
        if (!at(TokenKind::end_of_input)) error_at(peek(), "unexpected '" + peek().lexeme + "' after protocol body");
        return g;
    }

    Trigger trigger() {
        const Token& kind = peek();
        if (kind.kind != TokenKind::identifier) fail(kind, "expected trigger after 'on'");
        next();
        if (kind.text == "message") return MessageTrigger{lower(expect(TokenKind::string, "message keyword string").text)};
        if (kind.text == "after") {
            const auto& d = expect(TokenKind::duration, "duration (e.g. 11h)");
            return AfterTrigger{*parse_duration(d.text)};
        }
        if (kind.text == "at") {
            const auto& t = expect(TokenKind::time, "time of day (HH:MM)");
            auto lt = parse_local_time(t.text);
            if (!lt) fail(t, "invalid time of day '" + t.text + "'");
            return AtTrigger{*lt};
        }
        if (kind.text == "tool") {
            auto tool = ident("tool name");
            expect(TokenKind::colon, "':' between tool name and outcome");
            auto outcome = ident("tool outcome");
            return ToolResultTrigger{tool, outcome};
        }
        if (kind.text == "timer") return NamedTimerTrigger{ident("timer name")};
        if (kind.text == "manual") return ManualTrigger{};
        fail(kind, "unknown trigger kind '" + kind.text + "'");
    }

    bool at(TokenKind k) const { return peek().kind == k; }

private:
    const Token& peek(std::size_t ahead = 0) const {
        const auto i = std::min(pos_ + ahead, toks_.size() - 1);
        return toks_[i];
    }
    const Token& next() {
        const Token& t = peek();
        if (pos_ < toks_.size() - 1) ++pos_;
        return t;
    }
    bool at_word(std::string_view w) const { return at(TokenKind::identifier) && peek().text == w; }

    [[noreturn]] void fail(const Token& t, std::string message) {
        throw SyntaxError{CompileDiagnostic{Severity::error, t.location, std::move(message)}};
    }
    void error_at(const Token& t, std::string message) {
        diags_.push_back(CompileDiagnostic{Severity::error, t.location, std::move(message)});
    }

    std::string found(const Token& t) const {
        return t.kind == TokenKind::end_of_input ? "end of input" : "'" + t.lexeme + "'";
    }

    const Token& expect(TokenKind k, std::string_view what) {
        if (!at(k)) fail(peek(), "expected " + std::string(what) + ", found " + found(peek()));
        return next();
    }
    void expect_word(std::string_view w) {
        if (!at_word(w)) fail(peek(), "expected '" + std::string(w) + "', found " + found(peek()));
        next();
    }
    std::string ident(std::string_view what) {
        const auto& t = expect(TokenKind::identifier, what);
        if (reserved(t.text)) fail(t, "'" + t.text + "' is a reserved word and cannot be used as " + std::string(what));
        return t.text;
    }

    void recover() {
        int depth = block_depth_;
        block_depth_ = 0;
        while (!at(TokenKind::end_of_input)) {
            if (at(TokenKind::lbrace)) ++depth;
            if (at(TokenKind::rbrace)) {
                if (depth == 0) return;
                --depth;
            }
            if (at(TokenKind::semicolon) && depth == 0) {
                next();
                return;
            }
            next();
        }
    }

    void item(ProtocolGraph& g) {
        if (at_word("state")) return state(g);
        if (at_word("template")) {
            const auto loc = next().location;
            auto id = ident("template id");
            auto text = expect(TokenKind::string, "template text").text;
            expect(TokenKind::semicolon, "';'");
            g.templates.push_back(TemplateDef{id, text, loc});
            return;
        }
        if (at_word("meta")) {
            next();
            auto key = ident("metadata key");
            auto value = expect(TokenKind::string, "metadata value").text;
            expect(TokenKind::semicolon, "';'");
            g.metadata.emplace_back(key, value);
            return;
        }
        if (at(TokenKind::identifier) && peek(1).kind == TokenKind::arrow) return transition(g);
        fail(peek(), "expected declaration (state, transition, template or meta), found " + found(peek()));
    }

    void state(ProtocolGraph& g) {
        StateDef s;
        s.location = next().location;
        s.name = ident("state name");
        while (at(TokenKind::identifier)) {
            const auto& flag = peek();
            if (flag.text == "initial") {
                s.initial = true;
            } else if (flag.text == "terminal") {
                s.terminal = true;
            } else if (flag.text == "escalation") {
                s.escalation = true;
            } else {
                fail(flag, "unknown state flag '" + flag.text + "'");
            }
            next();
        }
        if (at(TokenKind::lbrace)) {
            next();
            ++block_depth_;
            while (!at(TokenKind::rbrace)) {
                if (at(TokenKind::end_of_input)) fail(peek(), "missing '}' closing state block");
                bool is_exit = false;
                if (at_word("exit")) {
                    next();
                    is_exit = true;
                }
                auto a = action();
                (is_exit ? s.exit_actions : s.entry_actions).push_back(std::move(a));
                if (at(TokenKind::semicolon) || at(TokenKind::comma)) next();
            }
            next();
            --block_depth_;
        }
        expect(TokenKind::semicolon, "';' after state declaration");
        g.states.push_back(std::move(s));
    }

    void transition(ProtocolGraph& g) {
        TransitionDef t;
        t.location = peek().location;
        t.from = ident("source state");
        expect(TokenKind::arrow, "'->'");
        t.to = ident("target state");
        expect_word("on");
        t.trigger = trigger();
        if (at_word("guard")) {
            next();
            t.guard = ident("guard name");
        }
        if (at_word("do")) {
            next();
            t.actions.push_back(action());
            while (at(TokenKind::comma)) {
                next();
                t.actions.push_back(action());
            }
        }
        expect(TokenKind::semicolon, "';' after transition");
        g.transitions.push_back(std::move(t));
    }

    ActionSpec action() {
        const Token& kw = peek();
        if (kw.kind != TokenKind::identifier) fail(kw, "expected action, found " + found(kw));
        next();
        ActionSpec a;
        a.location = kw.location;
        if (kw.text == "send") {
            a.kind = ActionKind::send_message;
            a.arguments = {expect(TokenKind::string, "template id string").text};
        } else if (kw.text == "schedule") {
            a.kind = ActionKind::schedule;
            auto id = ident("timer name");
            auto d = expect(TokenKind::duration, "duration").text;
            a.arguments = {id, format_duration(*parse_duration(d))};
        } else if (kw.text == "cancel") {
            a.kind = ActionKind::cancel;
            a.arguments = {ident("timer name")};
        } else if (kw.text == "metric") {
            a.kind = ActionKind::record_metric;
            a.arguments = {ident("metric name")};
        } else if (kw.text == "notify_staff") {
            a.kind = ActionKind::notify_staff;
            a.arguments = {expect(TokenKind::string, "notification reason string").text};
        } else {
            fail(kw, "unknown action '" + kw.text + "'");
        }
        return a;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    int block_depth_ = 0;
    std::vector<CompileDiagnostic>& diags_;
};

void check_names(const ProtocolGraph& g, std::vector<CompileDiagnostic>& diags) {
    std::map<std::string, SourceLocation> seen;
    for (const auto& s : g.states) {
        auto [it, inserted] = seen.emplace(s.name, s.location);
        if (!inserted) {
            diags.push_back({Severity::error, s.location,
                             "duplicate state '" + s.name + "' (first declared at line " +
                                 std::to_string(it->second.line) + ")"});
        }
    }
    for (const auto& t : g.transitions) {
        for (const auto* end : {&t.from, &t.to}) {
            if (!seen.count(*end)) {
                diags.push_back({Severity::error, t.location, "transition references undeclared state '" + *end + "'"});
            }
        }
    }
    std::set<std::string> templates;
    for (const auto& t : g.templates) {
        if (!templates.insert(t.id).second) {
            diags.push_back({Severity::error, t.location, "duplicate template '" + t.id + "'"});
        }
    }
}

} // namespace

ParseResult parse_protocol(std::string_view source) {
    ParseResult out;
    auto lexed = tokenize(source);
    out.diagnostics = std::move(lexed.diagnostics);
    const auto normalized = normalize(lexed.tokens);
    Parser parser(std::move(lexed.tokens), out.diagnostics);
    ProtocolGraph g = parser.parse_file();
    if (!has_errors(out.diagnostics)) check_names(g, out.diagnostics);
    if (!has_errors(out.diagnostics)) {
        g.normalized = normalized;
        out.graph = std::move(g);
    }
    return out;
}

std::optional<Trigger> parse_trigger_key(std::string_view key) {
    auto lexed = tokenize(key);
    if (!lexed.diagnostics.empty()) return std::nullopt;
    std::vector<CompileDiagnostic> diags;
    Parser p(std::move(lexed.tokens), diags);
    try {
        auto t = p.trigger();
        if (!p.at(TokenKind::end_of_input)) return std::nullopt;
        return t;
    } catch (const SyntaxError&) {
        return std::nullopt;
    }
}

} // namespace protoflow::dsl
