#pragma once

#include <map>
#include <memory>
#include <string>

#include "protoflow/gateway/provider.hpp"
#include "protoflow/runtime/engine.hpp"
#include "protoflow/sched/clock.hpp"
#include "protoflow/study/bindings.hpp"

namespace pftest {

using namespace protoflow;

inline Instant T(const char* s) { return parse_rfc3339(s); }

inline std::string pack_dir(const std::string& name) { return std::string(PROTOFLOW_SOURCE_DIR) + "/packs/" + name; }

inline const std::string kStaff = "+15559990000";

inline runtime::EngineOptions engine_options() {
    runtime::EngineOptions o;
    o.pool.numbers = {"+15550000001", "+15550000002"};
    o.staff = {kStaff};
    return o;
}

/// An engine on a virtual clock with a simulated SMS provider.
struct World {
    sched::VirtualClock clock;
    std::shared_ptr<runtime::BindingsRegistry> bindings = study::default_bindings();
    gateway::SimGateway sms;
    convo::EmrStore emr;
    std::map<std::string, std::shared_ptr<const runtime::Pack>> packs;
    runtime::Engine engine;

    explicit World(Instant start = T("2021-09-09T04:00:00Z"))
        : clock(start), engine(engine_options(), clock, bindings) {
        engine.set_provider(&sms);
        engine.set_emr(&emr);
    }

    std::shared_ptr<const runtime::Pack> pack(const std::string& name) {
        auto& p = packs[name];
        if (!p) {
            auto b = bindings;
            p = runtime::load_pack(pack_dir(name), [b](const std::string& i) { return b->guards(i); });
        }
        return p;
    }

    runtime::PackResolver resolver() {
        return [this](const std::string& name) { return pack(name); };
    }

    std::string study(const std::string& pack_name, const std::string& tz = "America/New_York") {
        return engine.create_study({pack_name + " study", tz, {"+15559990001"}}, pack(pack_name)).study_id;
    }

    runtime::ReceiveOutcome text(const std::string& from, const std::string& body) {
        gateway::InboundMessage m;
        m.from_address = from;
        m.body = body;
        m.received_at = clock.now();
        return engine.receive(m);
    }

    void until(Instant t) { engine.run_until(clock, t); }
    void until(const char* t) { until(T(t)); }

    std::string last_to(const std::string& address) const {
        auto s = sms.sent_to(address);
        return s.empty() ? "" : s.back().message.body;
    }
};

} // namespace pftest
