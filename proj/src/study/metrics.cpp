#include "protoflow/study/metrics.hpp"

#include <set>

namespace protoflow::study {

double success_rate(std::int64_t successful_fasts, std::int64_t days_enrolled) {
    if (days_enrolled <= 0) throw MetricsError("success rate needs at least one enrolled day");
    return static_cast<double>(successful_fasts) / static_cast<double>(days_enrolled);
}

double success_rate(const std::vector<FastRecord>& fasts, std::int64_t days_enrolled) {
    std::set<absl::CivilDay> days;
    for (const auto& f : fasts) {
        if (f.success) days.insert(f.date);
    }
    return success_rate(static_cast<std::int64_t>(days.size()), days_enrolled);
}

double error_rate(std::int64_t unrecognized, std::int64_t total_incoming) {
    if (total_incoming <= 0) throw MetricsError("error rate needs at least one incoming message");
    return static_cast<double>(unrecognized) / static_cast<double>(total_incoming);
}

std::int64_t days_enrolled(Instant registered_at, Instant as_of, const TimeZone& tz) {
    if (as_of < registered_at) return 0;
    return (tz.local_date(as_of) - tz.local_date(registered_at)) + 1;
}

bool ParticipantTally::operator==(const ParticipantTally& o) const {
    if (participant_id != o.participant_id || registered_at != o.registered_at || timezone != o.timezone ||
        total_incoming != o.total_incoming || unrecognized != o.unrecognized || fasts.size() != o.fasts.size()) {
        return false;
    }
    for (std::size_t i = 0; i < fasts.size(); ++i) {
        if (to_json(fasts[i]) != to_json(o.fasts[i])) return false;
    }
    return true;
}

namespace {

std::int64_t successful_days(const std::vector<FastRecord>& fasts, Instant as_of) {
    std::set<absl::CivilDay> days;
    for (const auto& f : fasts) {
        if (f.success && f.end_at <= as_of) days.insert(f.date);
    }
    return static_cast<std::int64_t>(days.size());
}

} // namespace

AdherenceMetrics compute_metrics(const ParticipantTally& t, Instant as_of) {
    return aggregate_metrics({t}, as_of);
}

AdherenceMetrics aggregate_metrics(const std::vector<ParticipantTally>& tallies, Instant as_of) {
    AdherenceMetrics m;
    for (const auto& t : tallies) {
        const auto tz = TimeZone::load(t.timezone);
        auto days = days_enrolled(t.registered_at, as_of, tz);
        // Today only counts once it has a result.
        bool today = false;
        for (const auto& f : t.fasts) today = today || (f.end_at <= as_of && f.date == tz.local_date(as_of));
        if (days > 0 && !today) --days;
        m.days_enrolled += days;
        const auto ok = successful_days(t.fasts, as_of);
        m.successful_fasts += ok;
        for (const auto& f : t.fasts) m.failed_fasts += !f.success && f.end_at <= as_of;
        m.unrecognized_messages += t.unrecognized;
        m.total_incoming += t.total_incoming;
    }
    if (m.days_enrolled > 0) m.success_rate = success_rate(m.successful_fasts, m.days_enrolled);
    if (m.total_incoming > 0) m.error_rate = error_rate(m.unrecognized_messages, m.total_incoming);
    return m;
}

nlohmann::json to_json(const AdherenceMetrics& m) {
    return {{"successful_fasts", m.successful_fasts},
            {"failed_fasts", m.failed_fasts},
            {"days_enrolled", m.days_enrolled},
            {"unrecognized_messages", m.unrecognized_messages},
            {"total_incoming", m.total_incoming},
            {"success_rate", m.display_success_rate()},
            {"error_rate", m.display_error_rate()},
            {"success_rate_defined", m.success_rate.has_value()},
            {"error_rate_defined", m.error_rate.has_value()}};
}

nlohmann::json to_json(const FastRecord& f) {
    return {{"participant_id", f.participant_id},
            {"date", format_civil_day(f.date)},
            {"start_at", format_rfc3339(f.start_at)},
            {"end_at", format_rfc3339(f.end_at)},
            {"duration_ms", (f.end_at - f.start_at).count()},
            {"success", f.success}};
}

FastRecord fast_from_json(const nlohmann::json& j) {
    FastRecord f;
    f.participant_id = j.at("participant_id").get<std::string>();
    f.date = *parse_civil_day(j.at("date").get<std::string>());
    f.start_at = parse_rfc3339(j.at("start_at").get<std::string>());
    f.end_at = parse_rfc3339(j.at("end_at").get<std::string>());
    f.duration_hours = std::chrono::duration<double, std::ratio<3600>>(f.end_at - f.start_at).count();
    f.success = j.at("success").get<bool>();
    return f;
}

} // namespace protoflow::study
