#include "protoflow/runtime/machine.hpp"

namespace protoflow::runtime {

std::string_view to_string(MachineStatus s) {
    switch (s) {
    case MachineStatus::active: return "active";
    case MachineStatus::completed: return "completed";
    case MachineStatus::withdrawn: return "withdrawn";
    }
    return "?";
}

std::optional<MachineStatus> parse_machine_status(std::string_view s) {
    if (s == "active") return MachineStatus::active;
    if (s == "completed") return MachineStatus::completed;
    if (s == "withdrawn") return MachineStatus::withdrawn;
    return std::nullopt;
}

bool ParticipantMachine::operator==(const ParticipantMachine& o) const { return to_json(*this) == to_json(o); }

nlohmann::json to_json(const ParticipantMachine& m) {
    return {{"participant_id", m.participant_id},
            {"study_id", m.study_id},
            {"protocol_version", m.protocol_version},
            {"current_state", m.current_state},
            {"state_entered_at", format_rfc3339(m.state_entered_at)},
            {"context", to_json(m.context)},
            {"status", to_string(m.status)},
            {"address", m.address},
            {"timezone", m.timezone},
            {"registered_at", format_rfc3339(m.registered_at)},
            {"messages_in", m.messages_in},
            {"unrecognized", m.unrecognized},
            {"messages_out", m.messages_out},
            {"metrics", m.metrics}};
}

ParticipantMachine machine_from_json(const nlohmann::json& j) {
    ParticipantMachine m;
    m.participant_id = j.at("participant_id").get<std::string>();
    m.study_id = j.at("study_id").get<std::string>();
    m.protocol_version = j.at("protocol_version").get<std::string>();
    m.current_state = j.at("current_state").get<std::string>();
    m.state_entered_at = parse_rfc3339(j.at("state_entered_at").get<std::string>());
    m.context = context_from_json(j.at("context"));
    m.status = parse_machine_status(j.at("status").get<std::string>()).value();
    m.address = j.at("address").get<std::string>();
    m.timezone = j.at("timezone").get<std::string>();
    m.registered_at = parse_rfc3339(j.at("registered_at").get<std::string>());
    m.messages_in = j.at("messages_in").get<std::int64_t>();
    m.unrecognized = j.at("unrecognized").get<std::int64_t>();
    m.messages_out = j.at("messages_out").get<std::int64_t>();
    m.metrics = j.at("metrics").get<std::vector<nlohmann::json>>();
    return m;
}

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::inbound_message: return "inbound_message";
    case EventKind::timer_fired: return "timer_fired";
    case EventKind::tool_result: return "tool_result";
    case EventKind::manual_transition: return "manual_transition";
    }
    return "?";
}

std::string_view to_string(TransitionOutcome::Result r) {
    switch (r) {
    case TransitionOutcome::Result::applied: return "applied";
    case TransitionOutcome::Result::rejected: return "rejected";
    case TransitionOutcome::Result::no_match: return "no_match";
    }
    return "?";
}

nlohmann::json to_json(const TransitionOutcome& o) {
    auto actions = nlohmann::json::array();
    for (const auto& a : o.actions_emitted) actions.push_back(dsl::to_source(a));
    nlohmann::json j{{"result", to_string(o.result)}, {"from_state", o.from_state}, {"actions", std::move(actions)}};
    if (o.applied()) j["to_state"] = o.to_state;
    if (o.transition) j["transition"] = *o.transition;
    if (!o.reason.empty()) j["reason"] = o.reason;
    return j;
}

} // namespace protoflow::runtime
