#pragma once

#include <set>
#include <string>
#include <vector>

#include "protoflow/dsl/graph.hpp"

namespace protoflow::dsl {

/// Graph-level checks. Errors:
///   - zero or several initial states (one diagnostic either way)
///   - transition endpoint naming an undeclared state
///   - two transitions out of one state with identical (trigger, guard)
///   - any transition leaving a terminal state
///   - escalation state without a notify_staff entry action
///   - guard not in `known_guards` (only checked when a registry is given)
/// Warnings:
///   - state unreachable from the initial state
///   - `timer X` trigger with no `schedule X` action anywhere in the graph
std::vector<CompileDiagnostic> validate_graph(const ProtocolGraph& graph,
                                              const std::set<std::string>* known_guards = nullptr);

} // namespace protoflow::dsl
