#include "protoflow/dsl/dot.hpp"

namespace protoflow::dsl {

namespace {

std::string dot_quote(std::string_view s) {
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

} // namespace

std::string export_dot(const ProtocolGraph& graph) {
    std::string out = "digraph " + dot_quote(graph.protocol_id) + " {\n";
    out += "  rankdir=LR;\n";
    out += "  node [shape=ellipse];\n";
    for (const auto& s : graph.states) {
        out += "  " + dot_quote(s.name);
        std::string attrs;
        auto add = [&](std::string a) { attrs += (attrs.empty() ? "" : ", ") + std::move(a); };
        if (s.initial) add("style=bold, xlabel=\"initial\"");
        if (s.terminal) add("peripheries=2");
        if (s.escalation) add("color=red");
        if (!attrs.empty()) out += " [" + attrs + "]";
        out += ";\n";
    }
    for (const auto& t : graph.transitions) {
        std::string label = trigger_key(t.trigger);
        if (t.guard) label += " [" + *t.guard + "]";
        out += "  " + dot_quote(t.from) + " -> " + dot_quote(t.to) + " [label=" + dot_quote(label) + "];\n";
    }
    out += "}\n";
    return out;
}

} // namespace protoflow::dsl
