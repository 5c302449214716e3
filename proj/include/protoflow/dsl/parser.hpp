#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "protoflow/dsl/graph.hpp"

namespace protoflow::dsl {

struct ParseResult {
    std::optional<ProtocolGraph> graph;  // set iff no error diagnostics
    std::vector<CompileDiagnostic> diagnostics;

    bool ok() const { return graph.has_value(); }
};

/// Grammar (keywords are case-sensitive):
///
///   protocol   := 'protocol' STRING '{' item* '}'
///   item       := state | transition | template | meta
///   state      := 'state' IDENT flag* ('{' ('exit'? action ';'?)* '}')? ';'
///   flag       := 'initial' | 'terminal' | 'escalation'
///   transition := IDENT '->' IDENT 'on' trigger ('guard' IDENT)? ('do' action (',' action)*)? ';'
///   trigger    := 'message' STRING | 'after' DURATION | 'at' TIME | 'tool' IDENT ':' IDENT
///               | 'timer' IDENT | 'manual'
///   action     := 'send' STRING | 'schedule' IDENT DURATION | 'cancel' IDENT | 'metric' IDENT
///               | 'notify_staff' STRING
///   template   := 'template' IDENT STRING ';'
///   meta       := 'meta' IDENT STRING ';'
///
/// Besides syntax, rejects duplicate state names and transitions naming
/// undeclared states. Graph-level checks live in validate_graph().
ParseResult parse_protocol(std::string_view source);

} // namespace protoflow::dsl
