#include "protoflow/dsl/compiler.hpp"

#include <algorithm>

#include <json.hpp>

#include "protoflow/common/hash.hpp"
#include "protoflow/dsl/parser.hpp"
#include "protoflow/dsl/validator.hpp"

namespace protoflow::dsl {

namespace {

std::string summarize(const std::vector<CompileDiagnostic>& diagnostics) {
    std::string out = "protocol failed to compile";
    for (const auto& d : diagnostics) {
        if (d.severity != Severity::error) continue;
        out += "\n  " + format_diagnostic("<protocol>", d);
    }
    return out;
}

nlohmann::json encode_actions(const std::vector<ActionSpec>& actions) {
    auto out = nlohmann::json::array();
    for (const auto& a : actions) out.push_back(to_source(a));
    return out;
}

} // namespace

CompileError::CompileError(std::vector<CompileDiagnostic> diagnostics)
    : std::runtime_error(summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::optional<std::size_t> CompiledProtocol::state_index(std::string_view name) const {
    for (std::size_t i = 0; i < states_.size(); ++i) {
        if (states_[i].name == name) return i;
    }
    return std::nullopt;
}

std::span<const std::size_t> CompiledProtocol::candidates(std::size_t state, std::string_view trigger_key) const {
    auto s = table_.find(state);
    if (s == table_.end()) return {};
    auto t = s->second.find(trigger_key);
    if (t == s->second.end()) return {};
    return t->second;
}

std::optional<std::string> CompiledProtocol::meta(std::string_view key) const {
    for (const auto& [k, v] : metadata_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string CompiledProtocol::encode() const {
    nlohmann::json j;
    j["protocol_id"] = protocol_id_;
    j["version_hash"] = version_hash_;
    j["initial"] = states_.at(initial_).name;
    auto states = nlohmann::json::array();
    for (const auto& s : states_) {
        states.push_back({{"name", s.name},
                          {"initial", s.initial},
                          {"terminal", s.terminal},
                          {"escalation", s.escalation},
                          {"entry", encode_actions(s.entry_actions)},
                          {"exit", encode_actions(s.exit_actions)},
                          {"state_timers", s.state_timers}});
    }
    j["states"] = std::move(states);
    auto transitions = nlohmann::json::array();
    for (const auto& t : transitions_) {
        transitions.push_back({{"from", states_[t.from].name},
                               {"to", states_[t.to].name},
                               {"trigger", t.key},
                               {"guard", t.guard ? nlohmann::json(*t.guard) : nlohmann::json()},
                               {"actions", encode_actions(t.actions)}});
    }
    j["transitions"] = std::move(transitions);
    auto meta = nlohmann::json::array();
    for (const auto& [k, v] : metadata_) meta.push_back({k, v});
    j["metadata"] = std::move(meta);
    auto templates = nlohmann::json::array();
    for (const auto& t : templates_) templates.push_back({t.id, t.text});
    j["templates"] = std::move(templates);
    return j.dump();
}

CompiledProtocol compile(const ProtocolGraph& graph, const std::set<std::string>* known_guards) {
    auto diagnostics = validate_graph(graph, known_guards);
    if (has_errors(diagnostics)) throw CompileError(std::move(diagnostics));

    CompiledProtocol out;
    out.protocol_id_ = graph.protocol_id;
    out.version_hash_ = sha256_hex(normalized_source(graph));
    out.metadata_ = graph.metadata;
    out.templates_ = graph.templates;
    for (std::size_t i = 0; i < graph.states.size(); ++i) {
        const auto& s = graph.states[i];
        out.states_.push_back(CompiledState{s.name, s.initial, s.terminal, s.escalation, s.entry_actions,
                                            s.exit_actions, {}});
        if (s.initial) out.initial_ = i;
    }
    for (std::size_t i = 0; i < graph.transitions.size(); ++i) {
        const auto& t = graph.transitions[i];
        CompiledTransition ct;
        ct.index = i;
        ct.from = *out.state_index(t.from);
        ct.to = *out.state_index(t.to);
        ct.trigger = t.trigger;
        ct.key = trigger_key(t.trigger);
        ct.guard = t.guard;
        ct.actions = t.actions;
        out.table_[ct.from][ct.key].push_back(i);
        if (is_state_timer(t.trigger)) {
            auto& timers = out.states_[ct.from].state_timers;
            if (std::find(timers.begin(), timers.end(), ct.key) == timers.end()) timers.push_back(ct.key);
        }
        out.transitions_.push_back(std::move(ct));
    }
    return out;
}

CompiledProtocol compile_source(std::string_view source, const std::set<std::string>* known_guards) {
    auto parsed = parse_protocol(source);
    if (!parsed.ok()) throw CompileError(std::move(parsed.diagnostics));
    return compile(*parsed.graph, known_guards);
}

} // namespace protoflow::dsl
