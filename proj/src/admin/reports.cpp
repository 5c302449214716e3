#include "protoflow/admin/reports.hpp"

#include <cstdio>

#include "protoflow/study/bindings.hpp"

namespace protoflow::admin {

using runtime::AuditKind;
using runtime::AuditRecord;

namespace {

std::string rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

nlohmann::json study_metrics(const runtime::Engine& engine, const std::string& study_id, Instant as_of) {
    const auto& s = engine.study(study_id);
    std::vector<study::ParticipantTally> tallies;
    auto people = nlohmann::json::array();
    for (const auto* m : engine.participants(study_id)) {
        tallies.push_back(study::tally(*m));
        people.push_back({{"participant_id", m->participant_id},
                          {"state", m->current_state},
                          {"status", std::string(runtime::to_string(m->status))},
                          {"messages_in", m->messages_in},
                          {"messages_out", m->messages_out},
                          {"metrics", study::to_json(study::compute_metrics(tallies.back(), as_of))}});
    }
    auto out = study::to_json(study::aggregate_metrics(tallies, as_of));
    out["study_id"] = study_id;
    out["protocol"] = s.pack->protocol.protocol_id();
    out["as_of"] = format_rfc3339(as_of);
    out["participant_count"] = tallies.size();
    out["participants"] = std::move(people);
    return out;
}

std::string export_csv(const runtime::Engine& engine, const std::string& study_id, Instant as_of) {
    const auto& protocol = engine.study(study_id).pack->protocol;
    std::string out = std::string(kExportHeader) + "\n";
    for (const auto* m : engine.participants(study_id)) {
        const auto trail = engine.audit_trail(m->participant_id);
        if (trail.empty() || trail.front().kind != AuditKind::registration) continue;
        const auto tz = TimeZone::load(trail.front().detail.at("timezone").get<std::string>());
        std::vector<AuditRecord> upto;
        study::ParticipantTally tally;
        std::size_t next = 0;
        for (auto day = tz.local_date(trail.front().timestamp); day <= tz.local_date(as_of); ++day) {
            const auto cutoff = std::min(tz.at(day + 1, LocalTime{0, 0}) - std::chrono::milliseconds(1), as_of);
            std::int64_t unrecognized_today = 0;
            for (; next < trail.size() && trail[next].timestamp <= cutoff; ++next) {
                const auto& r = trail[next];
                study::count(tally, r);
                upto.push_back(r);
                if (r.kind == AuditKind::rejection && r.detail.value("unrecognized", false) &&
                    tz.local_date(r.timestamp) == day) {
                    ++unrecognized_today;
                }
            }
            int successes = 0, failures = 0;
            for (const auto& f : tally.fasts) {
                if (f.date != day) continue;
                (f.success ? successes : failures) += 1;
            }
            const auto metrics = study::compute_metrics(tally, cutoff);
            out += csv_field(m->participant_id) + "," + csv_field(study_id) + "," + format_civil_day(day) + "," +
                   runtime::replay(upto, protocol) + "," + std::to_string(successes) + "," +
                   std::to_string(failures) + "," + std::to_string(unrecognized_today) + "," +
                   rate(metrics.display_success_rate()) + "," + rate(metrics.display_error_rate()) + "\n";
        }
    }
    return out;
}

} // namespace protoflow::admin
