#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"
#include "protoflow/study/tre.hpp"

namespace protoflow::study {

class MetricsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Successful fasts / days enrolled. A day counts once even if two windows
/// that started on it both succeeded. Throws MetricsError for zero days.
double success_rate(const std::vector<FastRecord>& fasts, std::int64_t days_enrolled);
double success_rate(std::int64_t successful_fasts, std::int64_t days_enrolled);

/// Throws MetricsError for zero incoming messages.
double error_rate(std::int64_t unrecognized, std::int64_t total_incoming);

/// Local calendar days from registration through `as_of`, both inclusive.
std::int64_t days_enrolled(Instant registered_at, Instant as_of, const TimeZone& tz);

struct AdherenceMetrics {
    std::int64_t successful_fasts = 0;
    std::int64_t failed_fasts = 0;
    std::int64_t days_enrolled = 0;
    std::int64_t unrecognized_messages = 0;
    std::int64_t total_incoming = 0;
    std::optional<double> success_rate;  // empty while no day is enrolled
    std::optional<double> error_rate;    // empty while nothing came in

    /// Rates as shown to researchers: a participant with no history shows
    /// 100% success and 0% errors.
    double display_success_rate() const { return success_rate.value_or(1.0); }
    double display_error_rate() const { return error_rate.value_or(0.0); }

    bool operator==(const AdherenceMetrics&) const = default;
};

/// Inputs for one participant, as tracked live by the engine or recounted
/// from the audit log.
struct ParticipantTally {
    std::string participant_id;
    Instant registered_at{};
    std::string timezone = "UTC";
    std::int64_t total_incoming = 0;
    std::int64_t unrecognized = 0;
    std::vector<FastRecord> fasts;

    bool operator==(const ParticipantTally& o) const;
};

AdherenceMetrics compute_metrics(const ParticipantTally& t, Instant as_of);

/// Pooled over participants: total successes / total days enrolled and
/// total unrecognized / total incoming. Enrolled days run from the
/// registration day to `as_of`; the current day joins the denominator once a
/// fast ends on it, so a fresh participant has no rate yet and shows 100%.
AdherenceMetrics aggregate_metrics(const std::vector<ParticipantTally>& tallies, Instant as_of);

nlohmann::json to_json(const AdherenceMetrics& m);
nlohmann::json to_json(const FastRecord& f);
FastRecord fast_from_json(const nlohmann::json& j);

} // namespace protoflow::study
