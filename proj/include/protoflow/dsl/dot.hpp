#pragma once

#include <string>

#include "protoflow/dsl/graph.hpp"

namespace protoflow::dsl {

/// Graphviz digraph: one node per state (initial bold, terminal double
/// border, escalation red) and one edge per transition labelled with its
/// trigger key plus "[guard]" when guarded.
std::string export_dot(const ProtocolGraph& graph);

} // namespace protoflow::dsl
