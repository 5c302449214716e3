#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "protoflow/common/time.hpp"

namespace protoflow::convo {

/// [start, end)
struct TimeInterval {
    Instant start{};
    Instant end{};
};

/// Finds the longest lexicon phrase in free text (case-insensitive, whole
/// words) and returns it lower-cased: "this morning", "yesterday",
/// "last night", "last week", "7:30 am", "2 hours ago", ...
std::optional<std::string> find_time_phrase(std::string_view text);

/// Resolves a phrase against the message time in the participant's zone.
///   morning 06:00-11:59, afternoon 12:00-16:59, evening/tonight 17:00-21:59
///   yesterday [morning|afternoon|evening], last night = yesterday 17:00-23:59
///   today, last week = the seven days before today
///   now / just now / a few minutes ago, N hours ago, an hour ago
///   clock times with am/pm, today
std::optional<TimeInterval> resolve_time_phrase(std::string_view phrase, Instant now, const TimeZone& tz);

} // namespace protoflow::convo
