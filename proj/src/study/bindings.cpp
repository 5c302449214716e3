#include "protoflow/study/bindings.hpp"

#include <cstdio>

#include "protoflow/study/feedback.hpp"

namespace protoflow::study {

using runtime::Classification;
using runtime::Context;
using runtime::ParticipantMachine;

namespace {

std::string clock_text(LocalTime t) {
    const int h12 = t.hour % 12 == 0 ? 12 : t.hour % 12;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%d:%02d %s", h12, t.minute, t.hour < 12 ? "AM" : "PM");
    return buf;
}

} // namespace

Classification TreBindings::classify(const ParticipantMachine&, const gateway::InboundMessage& msg,
                                     const TimeZone& tz) const {
    Classification c;
    const auto p = parse_tre_message(msg.body, msg.received_at, tz);
    c.detail = {{"stated", p.stated}};
    switch (p.kind) {
    case TreParse::Kind::start_cal:
        c.trigger = dsl::trigger_key(dsl::MessageTrigger{"startcal"});
        c.payload["start_at"] = p.at;
        c.payload["start_time"] = clock_text(p.time);
        break;
    case TreParse::Kind::end_cal:
        c.trigger = dsl::trigger_key(dsl::MessageTrigger{"endcal"});
        c.payload["end_at"] = p.at;
        c.payload["end_time"] = clock_text(p.time);
        break;
    case TreParse::Kind::unrecognized:
        c.unrecognized = true;
        c.response = p.response;
        c.detail["reason"] = p.reason;
        break;
    }
    return c;
}

std::optional<bool> TreBindings::evaluate_guard(const std::string& guard, const ParticipantMachine& m,
                                                const Context& payload, Instant now, const TimeZone& tz) const {
    if (guard == "no_start_today") {
        auto start = runtime::get_instant(m.context, "start_at");
        return !start || tz.local_date(*start) != tz.local_date(now);
    }
    if (guard == "end_after_start") {
        auto start = runtime::get_instant(m.context, "start_at");
        auto end = runtime::get_instant(payload, "end_at");
        return start && end && *end > *start;
    }
    return std::nullopt;
}

nlohmann::json TreBindings::record_metric(const std::string& metric, ParticipantMachine& m, Instant,
                                          const TimeZone& tz) const {
    if (metric != "fast") return nlohmann::json::object();
    const auto start = runtime::get_instant(m.context, "start_at");
    const auto end = runtime::get_instant(m.context, "end_at");
    if (!start || !end) throw std::logic_error("fast metric needs start_at and end_at");
    return to_json(evaluate_fast(*start, *end, tz, m.participant_id));
}

std::optional<std::string> TreBindings::render(const std::string& template_id, const ParticipantMachine& m,
                                               const TemplateSet& templates) const {
    if (template_id != "fast_feedback") return std::nullopt;
    const auto fasts = fasts_of(m);
    if (fasts.empty()) throw RenderError("fast_feedback before any fast was recorded");
    return feedback_message(fasts.back(), &templates);
}

std::shared_ptr<runtime::BindingsRegistry> default_bindings() {
    auto r = std::make_shared<runtime::BindingsRegistry>();
    r->add(std::make_shared<TreBindings>());
    return r;
}

std::vector<FastRecord> fasts_of(const ParticipantMachine& m) {
    std::vector<FastRecord> out;
    for (const auto& j : m.metrics) {
        if (j.value("name", "") == "fast") out.push_back(fast_from_json(j));
    }
    return out;
}

ParticipantTally tally(const ParticipantMachine& m) {
    ParticipantTally t;
    t.participant_id = m.participant_id;
    t.registered_at = m.registered_at;
    t.timezone = m.timezone;
    t.total_incoming = m.messages_in;
    t.unrecognized = m.unrecognized;
    t.fasts = fasts_of(m);
    return t;
}

void count(ParticipantTally& t, const runtime::AuditRecord& r) {
    using runtime::AuditKind;
    t.participant_id = r.participant_id;
    switch (r.kind) {
    case AuditKind::registration:
        t.registered_at = r.timestamp;
        t.timezone = r.detail.at("timezone").get<std::string>();
        break;
    case AuditKind::message_in: ++t.total_incoming; break;
    case AuditKind::rejection:
        if (r.detail.value("unrecognized", false)) ++t.unrecognized;
        break;
    case AuditKind::metric:
        if (r.detail.value("name", "") == "fast") t.fasts.push_back(fast_from_json(r.detail));
        break;
    default: break;
    }
}

std::map<std::string, ParticipantTally> recount(const std::vector<runtime::AuditRecord>& records) {
    std::map<std::string, ParticipantTally> out;
    for (const auto& r : records) {
        if (!r.participant_id.empty()) count(out[r.participant_id], r);
    }
    return out;
}

} // namespace protoflow::study
