#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "protoflow/common/templates.hpp"
#include "protoflow/gateway/message.hpp"
#include "protoflow/runtime/machine.hpp"

namespace protoflow::runtime {

/// What an inbound message means to the protocol.
struct Classification {
    std::optional<std::string> trigger;  // message trigger key
    Context payload;                     // merged into the context when a transition applies
    bool unrecognized = false;           // counts toward the error rate
    std::optional<std::string> response; // sent back when nothing else handles the message
    nlohmann::json detail = nlohmann::json::object();
};

/// Study-specific host functions, selected by a protocol's `meta interpreter`.
class HostBindings {
public:
    virtual ~HostBindings() = default;

    virtual std::string name() const = 0;
    virtual std::set<std::string> guards() const { return {}; }

    virtual Classification classify(const ParticipantMachine& m, const gateway::InboundMessage& msg,
                                    const TimeZone& tz) const;

    /// Nullopt for a guard this binding does not know.
    virtual std::optional<bool> evaluate_guard(const std::string& guard, const ParticipantMachine& m,
                                               const Context& payload, Instant now, const TimeZone& tz) const;

    /// Detail recorded for a `metric` action; may also update the context.
    virtual nlohmann::json record_metric(const std::string& metric, ParticipantMachine& m, Instant now,
                                         const TimeZone& tz) const;

    /// Text for template ids the binding renders itself.
    virtual std::optional<std::string> render(const std::string& template_id, const ParticipantMachine& m,
                                              const TemplateSet& templates) const;
};

/// Message trigger from the first word of the body, or "photo" for an image
/// attachment. Anything that moves nothing and answers no question counts as
/// unrecognized.
class GenericBindings : public HostBindings {
public:
    std::string name() const override { return "generic"; }
};

class BindingsRegistry {
public:
    BindingsRegistry();  // holds "generic"

    void add(std::shared_ptr<const HostBindings> b);
    /// Throws std::out_of_range for an unknown interpreter.
    const HostBindings& get(const std::string& interpreter) const;
    bool contains(const std::string& interpreter) const { return bindings_.count(interpreter) > 0; }
    std::set<std::string> guards(const std::string& interpreter) const;

private:
    std::map<std::string, std::shared_ptr<const HostBindings>> bindings_;
};

} // namespace protoflow::runtime
