#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "protoflow/dsl/graph.hpp"

namespace protoflow::dsl {

class CompileError : public std::runtime_error {
public:
    explicit CompileError(std::vector<CompileDiagnostic> diagnostics);
    const std::vector<CompileDiagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<CompileDiagnostic> diagnostics_;
};

struct CompiledState {
    std::string name;
    bool initial = false;
    bool terminal = false;
    bool escalation = false;
    std::vector<ActionSpec> entry_actions;
    std::vector<ActionSpec> exit_actions;
    /// Distinct after/at trigger keys leaving this state, in declaration order.
    std::vector<std::string> state_timers;
};

struct CompiledTransition {
    std::size_t index = 0;  // declaration order
    std::size_t from = 0;
    std::size_t to = 0;
    Trigger trigger;
    std::string key;
    std::optional<std::string> guard;
    std::vector<ActionSpec> actions;
};

/// Validated, immutable transition table. Lookups by (state, trigger key)
/// return candidates in declaration order; the first whose guard holds wins.
class CompiledProtocol {
public:
    const std::string& protocol_id() const { return protocol_id_; }
    const std::string& version_hash() const { return version_hash_; }
    std::size_t initial_state() const { return initial_; }
    const std::vector<CompiledState>& states() const { return states_; }
    const std::vector<CompiledTransition>& transitions() const { return transitions_; }
    const std::vector<std::pair<std::string, std::string>>& metadata() const { return metadata_; }
    const std::vector<TemplateDef>& templates() const { return templates_; }

    std::optional<std::size_t> state_index(std::string_view name) const;
    const CompiledState& state(std::size_t i) const { return states_.at(i); }
    std::span<const std::size_t> candidates(std::size_t state, std::string_view trigger_key) const;
    std::optional<std::string> meta(std::string_view key) const;

    /// Canonical JSON encoding; byte-identical for identical normalized source.
    std::string encode() const;

private:
    friend CompiledProtocol compile(const ProtocolGraph&, const std::set<std::string>*);

    std::string protocol_id_;
    std::string version_hash_;
    std::size_t initial_ = 0;
    std::vector<CompiledState> states_;
    std::vector<CompiledTransition> transitions_;
    std::vector<std::pair<std::string, std::string>> metadata_;
    std::vector<TemplateDef> templates_;
    std::map<std::size_t, std::map<std::string, std::vector<std::size_t>, std::less<>>> table_;
};

/// Throws CompileError when validate_graph reports errors.
CompiledProtocol compile(const ProtocolGraph& graph, const std::set<std::string>* known_guards = nullptr);

/// Parse + validate + compile. Throws CompileError carrying every diagnostic.
CompiledProtocol compile_source(std::string_view source, const std::set<std::string>* known_guards = nullptr);

} // namespace protoflow::dsl
