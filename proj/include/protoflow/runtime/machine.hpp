#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/dsl/graph.hpp"
#include "protoflow/runtime/context.hpp"
#include "protoflow/runtime/pack.hpp"

namespace protoflow::runtime {

enum class MachineStatus { active, completed, withdrawn };

std::string_view to_string(MachineStatus s);
std::optional<MachineStatus> parse_machine_status(std::string_view s);

struct ParticipantMachine {
    std::string participant_id;
    std::string study_id;
    std::string protocol_version;
    std::string current_state;
    Instant state_entered_at{};
    Context context;
    MachineStatus status = MachineStatus::active;
    std::string address;
    std::string timezone;
    Instant registered_at{};
    std::int64_t messages_in = 0;
    std::int64_t unrecognized = 0;
    std::int64_t messages_out = 0;
    /// Every `metric` action result: {"name", "at", ...binding detail}.
    std::vector<nlohmann::json> metrics;

    bool operator==(const ParticipantMachine& o) const;
};

nlohmann::json to_json(const ParticipantMachine& m);
ParticipantMachine machine_from_json(const nlohmann::json& j);

enum class StudyStatus { active, closed };

struct Study {
    std::string study_id;
    std::string name;
    std::shared_ptr<const Pack> pack;
    std::string timezone = "UTC";
    std::vector<std::string> staff;  // notification addresses
    StudyStatus status = StudyStatus::active;
    Instant created_at{};
};

struct StudyConfig {
    std::string name;
    std::string timezone = "UTC";
    std::vector<std::string> staff;
};

enum class EventKind { inbound_message, timer_fired, tool_result, manual_transition };

std::string_view to_string(EventKind k);

struct EngineEvent {
    std::uint64_t event_id = 0;
    EventKind kind = EventKind::inbound_message;
    std::string participant_id;
    std::string trigger;  // trigger key
    Context payload;
    Instant occurred_at{};
};

struct TransitionOutcome {
    enum class Result { applied, rejected, no_match };

    Result result = Result::no_match;
    std::string from_state;
    std::string to_state;  // applied only
    std::optional<std::size_t> transition;
    std::vector<dsl::ActionSpec> actions_emitted;
    std::string reason;  // rejected / no_match

    bool applied() const { return result == Result::applied; }
};

std::string_view to_string(TransitionOutcome::Result r);
nlohmann::json to_json(const TransitionOutcome& o);

} // namespace protoflow::runtime
