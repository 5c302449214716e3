#include "protoflow/dsl/validator.hpp"

#include <deque>
#include <map>

namespace protoflow::dsl {

std::vector<CompileDiagnostic> validate_graph(const ProtocolGraph& graph, const std::set<std::string>* known_guards) {
    std::vector<CompileDiagnostic> out;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < graph.states.size(); ++i) index.emplace(graph.states[i].name, i);

    std::vector<const StateDef*> initials;
    for (const auto& s : graph.states) {
        if (s.initial) initials.push_back(&s);
    }
    if (initials.empty()) {
        out.push_back({Severity::error, graph.location, "protocol '" + graph.protocol_id + "' has no initial state"});
    } else if (initials.size() > 1) {
        std::string names;
        for (const auto* s : initials) names += (names.empty() ? "" : ", ") + s->name;
        out.push_back({Severity::error, initials[1]->location, "multiple initial states: " + names});
    }

    for (const auto& t : graph.transitions) {
        for (const auto* end : {&t.from, &t.to}) {
            if (!index.count(*end)) {
                out.push_back({Severity::error, t.location, "transition references undeclared state '" + *end + "'"});
            }
        }
    }

    // (state, trigger, guard) -> first declaration
    std::map<std::tuple<std::string, std::string, std::string>, const TransitionDef*> seen;
    for (const auto& t : graph.transitions) {
        const auto key = trigger_key(t.trigger);
        auto [it, inserted] = seen.emplace(std::make_tuple(t.from, key, t.guard.value_or("")), &t);
        if (!inserted) {
            out.push_back({Severity::error, t.location,
                           "ambiguous transition: state '" + t.from + "' already has a transition on " + key +
                               (t.guard ? " guard " + *t.guard : std::string()) + " (line " +
                               std::to_string(it->second->location.line) + ")"});
        }
        if (auto s = index.find(t.from); s != index.end() && graph.states[s->second].terminal) {
            out.push_back({Severity::error, t.location,
                           "terminal state '" + t.from + "' cannot have outgoing transitions"});
        }
        if (known_guards && t.guard && !known_guards->count(*t.guard)) {
            out.push_back({Severity::error, t.location, "unknown guard '" + *t.guard + "'"});
        }
    }

    for (const auto& s : graph.states) {
        if (!s.escalation) continue;
        bool notifies = false;
        for (const auto& a : s.entry_actions) notifies |= a.kind == ActionKind::notify_staff;
        if (!notifies) {
            out.push_back({Severity::error, s.location,
                           "escalation state '" + s.name + "' must notify staff on entry"});
        }
    }

    if (initials.size() >= 1) {
        std::vector<bool> reached(graph.states.size(), false);
        std::deque<std::size_t> queue{index.at(initials.front()->name)};
        reached[queue.front()] = true;
        std::map<std::string, std::vector<std::string>> edges;
        for (const auto& t : graph.transitions) edges[t.from].push_back(t.to);
        while (!queue.empty()) {
            const auto cur = queue.front();
            queue.pop_front();
            for (const auto& to : edges[graph.states[cur].name]) {
                auto it = index.find(to);
                if (it != index.end() && !reached[it->second]) {
                    reached[it->second] = true;
                    queue.push_back(it->second);
                }
            }
        }
        for (std::size_t i = 0; i < graph.states.size(); ++i) {
            if (!reached[i] && !graph.states[i].initial) {
                out.push_back({Severity::warning, graph.states[i].location,
                               "state '" + graph.states[i].name + "' is unreachable from initial state '" +
                                   initials.front()->name + "'"});
            }
        }
    }

    std::set<std::string> scheduled;
    auto collect = [&](const std::vector<ActionSpec>& actions) {
        for (const auto& a : actions) {
            if (a.kind == ActionKind::schedule) scheduled.insert(a.arguments.at(0));
        }
    };
    for (const auto& s : graph.states) {
        collect(s.entry_actions);
        collect(s.exit_actions);
    }
    for (const auto& t : graph.transitions) collect(t.actions);
    for (const auto& t : graph.transitions) {
        if (const auto* n = std::get_if<NamedTimerTrigger>(&t.trigger); n && !scheduled.count(n->timer)) {
            out.push_back({Severity::warning, t.location, "timer '" + n->timer + "' is never scheduled"});
        }
    }
    return out;
}

} // namespace protoflow::dsl
