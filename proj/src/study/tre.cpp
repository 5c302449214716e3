#include "protoflow/study/tre.hpp"

#include <regex>
#include <stdexcept>

namespace protoflow::study {

using namespace std::chrono_literals;

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<LocalTime> parse_clock(const std::string& text) {
    // H[:.]MM or HMM or H, then am/pm with optional periods and spaces.
    static const std::regex form(R"(^(\d{1,2})(?:[:.](\d{2}))?\s*([ap])\.?\s*m\.?$)");
    static const std::regex compact(R"(^(\d{1,2})(\d{2})\s*([ap])\.?\s*m\.?$)");
    std::smatch m;
    int hour = 0, minute = 0;
    char half = 'a';
    if (std::regex_match(text, m, form)) {
        hour = std::stoi(m[1]);
        minute = m[2].matched ? std::stoi(m[2]) : 0;
        half = m[3].str()[0];
    } else if (std::regex_match(text, m, compact)) {
        hour = std::stoi(m[1]);
        minute = std::stoi(m[2]);
        half = m[3].str()[0];
    } else {
        return std::nullopt;
    }
    if (hour < 1 || hour > 12 || minute > 59) return std::nullopt;
    hour %= 12;
    if (half == 'p') hour += 12;
    return LocalTime{hour, minute};
}

TreParse unrecognized(std::string reason, std::string_view response) {
    TreParse p;
    p.reason = std::move(reason);
    p.response = response;
    return p;
}

} // namespace

TreParse parse_tre_message(std::string_view body, Instant received_at, const TimeZone& tz) {
    const auto text = lower_ascii(trim(body));
    TreParse::Kind kind;
    std::string_view rest;
    std::string_view response;
    if (text.rfind("startcal", 0) == 0) {
        kind = TreParse::Kind::start_cal;
        rest = std::string_view(text).substr(8);
        response = kStartcalNotUnderstood;
    } else if (text.rfind("endcal", 0) == 0) {
        kind = TreParse::Kind::end_cal;
        rest = std::string_view(text).substr(6);
        response = kEndcalNotUnderstood;
    } else {
        return unrecognized("no STARTCAL or ENDCAL keyword", kMessageNotUnderstood);
    }
    rest = trim(rest);

    TreParse p;
    p.kind = kind;
    if (rest.empty()) {
        p.at = received_at;
        p.time = tz.local_time_of_day(received_at);
        return p;
    }
    auto clock = parse_clock(std::string(rest));
    if (!clock) return unrecognized("time '" + std::string(rest) + "' is not H[:MM] followed by am/pm", response);

    const auto day = tz.local_date(received_at);
    auto at = tz.at(day, *clock);
    if (at > received_at + 12h) at = tz.at(day - 1, *clock);
    p.time = *clock;
    p.at = at;
    p.stated = true;
    return p;
}

FastRecord evaluate_fast(Instant start_at, Instant end_at, const TimeZone& tz, std::string participant_id) {
    if (end_at <= start_at) {
        throw std::invalid_argument("fast ends at " + format_rfc3339(end_at) + ", not after its start " +
                                    format_rfc3339(start_at));
    }
    const auto d = end_at - start_at;
    FastRecord f;
    f.participant_id = std::move(participant_id);
    f.date = tz.local_date(start_at);
    f.start_at = start_at;
    f.end_at = end_at;
    f.duration_hours = std::chrono::duration<double, std::ratio<3600>>(d).count();
    f.success = d >= 9h && d <= 11h;
    return f;
}

std::string format_hours_minutes(Duration d) {
    const auto total = std::chrono::duration_cast<std::chrono::minutes>(d).count();
    const auto h = total / 60, m = total % 60;
    if (m == 0) return std::to_string(h) + "h";
    return std::to_string(h) + "h " + (m < 10 ? "0" : "") + std::to_string(m) + "m";
}

} // namespace protoflow::study
