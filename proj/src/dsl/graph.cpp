#include "protoflow/dsl/graph.hpp"

#include <algorithm>

#include "protoflow/dsl/lexer.hpp"

namespace protoflow::dsl {

namespace {

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    out += '"';
    return out;
}

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

void append_actions(std::string& out, const std::vector<ActionSpec>& actions) {
    for (std::size_t i = 0; i < actions.size(); ++i) {
        out += (i == 0 ? " do " : ", ");
        out += to_source(actions[i]);
    }
}

} // namespace

std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

std::string format_diagnostic(const std::string& file, const CompileDiagnostic& d) {
    return file + ":" + std::to_string(d.location.line) + ":" + std::to_string(d.location.column) + ": " +
           std::string(to_string(d.severity)) + ": " + d.message;
}

bool has_errors(const std::vector<CompileDiagnostic>& diagnostics) {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const CompileDiagnostic& d) { return d.severity == Severity::error; });
}

std::string_view to_string(ActionKind k) {
    switch (k) {
    case ActionKind::send_message: return "send";
    case ActionKind::schedule: return "schedule";
    case ActionKind::cancel: return "cancel";
    case ActionKind::record_metric: return "metric";
    case ActionKind::notify_staff: return "notify_staff";
    }
    return "?";
}

std::string to_source(const ActionSpec& a) {
    std::string out(to_string(a.kind));
    switch (a.kind) {
    case ActionKind::send_message:
    case ActionKind::notify_staff: out += " " + quote(a.arguments.at(0)); break;
    case ActionKind::schedule: out += " " + a.arguments.at(0) + " " + a.arguments.at(1); break;
    case ActionKind::cancel:
    case ActionKind::record_metric: out += " " + a.arguments.at(0); break;
    }
    return out;
}

std::string trigger_key(const Trigger& t) {
    return std::visit(overloaded{
                          [](const MessageTrigger& m) { return "message " + quote(m.keyword); },
                          [](const AfterTrigger& a) { return "after " + format_duration(a.delay); },
                          [](const AtTrigger& a) { return "at " + format_local_time(a.time); },
                          [](const ToolResultTrigger& r) { return "tool " + r.tool + ":" + r.outcome; },
                          [](const NamedTimerTrigger& n) { return "timer " + n.timer; },
                          [](const ManualTrigger&) { return std::string("manual"); },
                      },
                      t);
}

bool is_state_timer(const Trigger& t) {
    return std::holds_alternative<AfterTrigger>(t) || std::holds_alternative<AtTrigger>(t);
}

const StateDef* ProtocolGraph::find_state(std::string_view name) const {
    for (const auto& s : states) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

std::optional<std::string> ProtocolGraph::meta(std::string_view key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string to_source(const ProtocolGraph& g) {
    std::string out = "protocol " + quote(g.protocol_id) + " {\n";
    for (const auto& [k, v] : g.metadata) out += "  meta " + k + " " + quote(v) + ";\n";
    for (const auto& t : g.templates) out += "  template " + t.id + " " + quote(t.text) + ";\n";
    for (const auto& s : g.states) {
        out += "  state " + s.name;
        if (s.initial) out += " initial";
        if (s.terminal) out += " terminal";
        if (s.escalation) out += " escalation";
        if (!s.entry_actions.empty() || !s.exit_actions.empty()) {
            out += " {";
            for (const auto& a : s.entry_actions) out += " " + to_source(a) + ";";
            for (const auto& a : s.exit_actions) out += " exit " + to_source(a) + ";";
            out += " }";
        }
        out += ";\n";
    }
    for (const auto& t : g.transitions) {
        out += "  " + t.from + " -> " + t.to + " on " + trigger_key(t.trigger);
        if (t.guard) out += " guard " + *t.guard;
        append_actions(out, t.actions);
        out += ";\n";
    }
    out += "}\n";
    return out;
}

std::string normalized_source(const ProtocolGraph& g) {
    if (!g.normalized.empty()) return g.normalized;
    return normalize(tokenize(to_source(g)).tokens);
}

} // namespace protoflow::dsl
