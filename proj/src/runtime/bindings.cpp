#include "protoflow/runtime/bindings.hpp"

#include <cctype>
#include <stdexcept>

namespace protoflow::runtime {

Classification HostBindings::classify(const ParticipantMachine&, const gateway::InboundMessage& msg,
                                      const TimeZone&) const {
    Classification c;
    for (const auto& a : msg.attachments) {
        if (a.media_type.rfind("image/", 0) == 0) {
            c.trigger = dsl::trigger_key(dsl::MessageTrigger{"photo"});
            c.payload["photo_ref"] = a.storage_ref;
            return c;
        }
    }
    std::string word;
    for (char ch : msg.body) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            if (!word.empty()) break;
            continue;
        }
        word += static_cast<char>(std::tolower(u));
    }
    if (!word.empty()) c.trigger = dsl::trigger_key(dsl::MessageTrigger{word});
    c.unrecognized = true;  // cleared by the engine when the message is handled
    return c;
}

std::optional<bool> HostBindings::evaluate_guard(const std::string&, const ParticipantMachine&, const Context&, Instant,
                                                 const TimeZone&) const {
    return std::nullopt;
}

nlohmann::json HostBindings::record_metric(const std::string&, ParticipantMachine&, Instant, const TimeZone&) const {
    return nlohmann::json::object();
}

std::optional<std::string> HostBindings::render(const std::string&, const ParticipantMachine&,
                                                const TemplateSet&) const {
    return std::nullopt;
}

BindingsRegistry::BindingsRegistry() { add(std::make_shared<GenericBindings>()); }

void BindingsRegistry::add(std::shared_ptr<const HostBindings> b) { bindings_[b->name()] = std::move(b); }

const HostBindings& BindingsRegistry::get(const std::string& interpreter) const {
    auto it = bindings_.find(interpreter);
    if (it == bindings_.end()) throw std::out_of_range("no host bindings for interpreter '" + interpreter + "'");
    return *it->second;
}

std::set<std::string> BindingsRegistry::guards(const std::string& interpreter) const {
    auto it = bindings_.find(interpreter);
    return it == bindings_.end() ? std::set<std::string>{} : it->second->guards();
}

} // namespace protoflow::runtime
