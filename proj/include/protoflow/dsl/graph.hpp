#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "protoflow/common/time.hpp"

namespace protoflow::dsl {

struct SourceLocation {
    int line = 1;
    int column = 1;

    bool operator==(const SourceLocation&) const = default;
};

enum class Severity { error, warning };

struct CompileDiagnostic {
    Severity severity = Severity::error;
    SourceLocation location;
    std::string message;
};

std::string_view to_string(Severity s);

/// "<file>:<line>:<col>: <severity>: <message>"
std::string format_diagnostic(const std::string& file, const CompileDiagnostic& d);

bool has_errors(const std::vector<CompileDiagnostic>& diagnostics);

enum class ActionKind { send_message, schedule, cancel, record_metric, notify_staff };

std::string_view to_string(ActionKind k);

/// Arguments by kind:
///   send_message  {template_id}
///   schedule      {timer_id, duration literal}
///   cancel        {timer_id}
///   record_metric {metric name}
///   notify_staff  {reason}
struct ActionSpec {
    ActionKind kind = ActionKind::send_message;
    std::vector<std::string> arguments;
    SourceLocation location;

    bool operator==(const ActionSpec& o) const { return kind == o.kind && arguments == o.arguments; }
};

/// DSL spelling, e.g. `send "ack"` or `schedule reminder 2h`.
std::string to_source(const ActionSpec& a);

struct MessageTrigger {
    std::string keyword;  // lower-case
    bool operator==(const MessageTrigger&) const = default;
};

/// Measured from entry into the source state.
struct AfterTrigger {
    Duration delay{};
    bool operator==(const AfterTrigger&) const = default;
};

/// Daily wall-clock time in the participant's time zone.
struct AtTrigger {
    LocalTime time;
    bool operator==(const AtTrigger&) const = default;
};

struct ToolResultTrigger {
    std::string tool;
    std::string outcome;
    bool operator==(const ToolResultTrigger&) const = default;
};

/// Fired by a timer started with a `schedule` action.
struct NamedTimerTrigger {
    std::string timer;
    bool operator==(const NamedTimerTrigger&) const = default;
};

struct ManualTrigger {
    bool operator==(const ManualTrigger&) const = default;
};

using Trigger =
    std::variant<MessageTrigger, AfterTrigger, AtTrigger, ToolResultTrigger, NamedTimerTrigger, ManualTrigger>;

/// Canonical text of a trigger; also its transition-table key.
///   message "startcal" | after 11h | at 20:00 | tool DidTakeMedication:adequate | timer photo_deadline | manual
std::string trigger_key(const Trigger& t);

/// Inverse of trigger_key.
std::optional<Trigger> parse_trigger_key(std::string_view key);

/// after/at triggers are armed automatically while their source state is active.
bool is_state_timer(const Trigger& t);

struct StateDef {
    std::string name;
    bool initial = false;
    bool terminal = false;
    bool escalation = false;
    std::vector<ActionSpec> entry_actions;
    std::vector<ActionSpec> exit_actions;
    SourceLocation location;
};

struct TransitionDef {
    std::string from;
    std::string to;
    Trigger trigger;
    std::optional<std::string> guard;
    std::vector<ActionSpec> actions;
    SourceLocation location;
};

struct TemplateDef {
    std::string id;
    std::string text;
    SourceLocation location;
};

struct ProtocolGraph {
    std::string protocol_id;
    std::vector<StateDef> states;
    std::vector<TransitionDef> transitions;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<TemplateDef> templates;
    /// Comment- and whitespace-free token stream of the source it was parsed
    /// from. Empty for graphs built in code; see normalized_source().
    std::string normalized;
    SourceLocation location;

    const StateDef* find_state(std::string_view name) const;
    std::optional<std::string> meta(std::string_view key) const;
};

/// Pretty-prints a graph back into the protocol language.
std::string to_source(const ProtocolGraph& g);

/// The text the version hash is computed over.
std::string normalized_source(const ProtocolGraph& g);

} // namespace protoflow::dsl
