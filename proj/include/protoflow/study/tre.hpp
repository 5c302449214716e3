#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "protoflow/common/time.hpp"

namespace protoflow::study {

inline constexpr std::string_view kStartcalNotUnderstood =
    "Your STARTCAL time was not understood. Please send 'STARTCAL' again with your starting time, including 'am' or "
    "'pm.'";
inline constexpr std::string_view kEndcalNotUnderstood =
    "Your ENDCAL time was not understood. Please send 'ENDCAL' again with your ending time, including 'am' or 'pm.'";
inline constexpr std::string_view kMessageNotUnderstood =
    "Your message was not understood. Please send 'STARTCAL' or 'ENDCAL' followed by your time, including 'am' or "
    "'pm.'";

struct TreParse {
    enum class Kind { start_cal, end_cal, unrecognized };

    Kind kind = Kind::unrecognized;
    LocalTime time;      // 24-hour, recognized only
    Instant at{};        // the stated time anchored to a calendar day, recognized only
    bool stated = false; // false when the keyword came without a time
    std::string reason;  // unrecognized only
    std::string response;

    bool recognized() const { return kind != Kind::unrecognized; }
};

/// Total over arbitrary bytes.
///
///   message  := WS* keyword WS* [time] WS*        (keyword case-insensitive)
///   keyword  := "startcal" | "endcal"
///   time     := H | H:MM | H.MM | HMM, then optional space, then am/pm
///               with optional periods ("7am", "7:15 PM", "7.15p.m.")
///
/// A bare keyword means "now" (received_at). A stated time is placed on the
/// local calendar day of receipt, or the day before when that would put it
/// more than 12 hours in the future.
TreParse parse_tre_message(std::string_view body, Instant received_at, const TimeZone& tz);

struct FastRecord {
    std::string participant_id;
    absl::CivilDay date;  // local day the eating window started
    Instant start_at{};
    Instant end_at{};
    double duration_hours = 0;
    bool success = false;
};

/// Success iff 9h <= end - start <= 11h, compared exactly in milliseconds.
/// Throws std::invalid_argument unless end_at > start_at.
FastRecord evaluate_fast(Instant start_at, Instant end_at, const TimeZone& tz = TimeZone::utc(),
                         std::string participant_id = {});

/// "10h", "9h 05m".
std::string format_hours_minutes(Duration d);

} // namespace protoflow::study
