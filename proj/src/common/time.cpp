#include "protoflow/common/time.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <mutex>
#include <stdexcept>

namespace protoflow {

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
    }
    auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return res.ec == std::errc{};
}

} // namespace

std::optional<Instant> try_parse_rfc3339(std::string_view text) {
    int year, month, day, hour, minute, second;
    if (text.size() < 20) return std::nullopt;
    if (!read_int(text, 0, 4, year) || text[4] != '-' || !read_int(text, 5, 2, month) || text[7] != '-' ||
        !read_int(text, 8, 2, day) || (text[10] != 'T' && text[10] != 't' && text[10] != ' ') ||
        !read_int(text, 11, 2, hour) || text[13] != ':' || !read_int(text, 14, 2, minute) || text[16] != ':' ||
        !read_int(text, 17, 2, second)) {
        return std::nullopt;
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        return std::nullopt;
    }
    std::size_t pos = 19;
    int millis = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 3) millis = millis * 10 + (text[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        for (int i = digits; i < 3; ++i) millis *= 10;
    }
    int offset_minutes = 0;
    if (pos >= text.size()) return std::nullopt;
    if (text[pos] == 'Z' || text[pos] == 'z') {
        ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
        int oh, om;
        if (!read_int(text, pos + 1, 2, oh) || pos + 3 >= text.size() || text[pos + 3] != ':' ||
            !read_int(text, pos + 4, 2, om)) {
            return std::nullopt;
        }
        offset_minutes = (oh * 60 + om) * (text[pos] == '-' ? -1 : 1);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != text.size()) return std::nullopt;

    const absl::CivilSecond civil(year, month, day, hour, minute, second);
    if (civil.month() != month || civil.day() != day) return std::nullopt;  // e.g. Feb 30
    const absl::Time t = absl::FromCivil(civil, absl::UTCTimeZone()) - absl::Minutes(offset_minutes) +
                         absl::Milliseconds(millis);
    return from_absl(t);
}

Instant parse_rfc3339(std::string_view text) {
    auto t = try_parse_rfc3339(text);
    if (!t) throw std::invalid_argument("malformed RFC 3339 timestamp: '" + std::string(text) + "'");
    return *t;
}

std::string format_rfc3339(Instant t) {
    const auto ms = t.time_since_epoch().count();
    long long secs = ms / 1000;
    long long rem = ms % 1000;
    if (rem < 0) {
        rem += 1000;
        secs -= 1;
    }
    const absl::CivilSecond c = absl::ToCivilSecond(absl::FromUnixSeconds(secs), absl::UTCTimeZone());
    char buf[40];
    if (rem == 0) {
        std::snprintf(buf, sizeof buf, "%04lld-%02d-%02dT%02d:%02d:%02dZ", static_cast<long long>(c.year()),
                      c.month(), c.day(), c.hour(), c.minute(), c.second());
    } else {
        std::snprintf(buf, sizeof buf, "%04lld-%02d-%02dT%02d:%02d:%02d.%03lldZ", static_cast<long long>(c.year()),
                      c.month(), c.day(), c.hour(), c.minute(), c.second(), rem);
    }
    return buf;
}

std::string format_duration(Duration d) {
    const long long ms = d.count();
    if (ms % 1000 != 0) return std::to_string(ms) + "ms";
    const long long s = ms / 1000;
    if (s != 0 && s % 86400 == 0) return std::to_string(s / 86400) + "d";
    if (s != 0 && s % 3600 == 0) return std::to_string(s / 3600) + "h";
    if (s != 0 && s % 60 == 0) return std::to_string(s / 60) + "m";
    return std::to_string(s) + "s";
}

std::optional<Duration> parse_duration(std::string_view text) {
    if (text.size() < 2) return std::nullopt;
    const char unit = text.back();
    long long value = 0;
    auto digits = text.substr(0, text.size() - 1);
    for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    }
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (res.ec != std::errc{}) return std::nullopt;
    switch (unit) {
    case 's': return std::chrono::seconds(value);
    case 'm': return std::chrono::minutes(value);
    case 'h': return std::chrono::hours(value);
    case 'd': return std::chrono::hours(24 * value);
    default: return std::nullopt;
    }
}

std::string format_local_time(LocalTime t) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", t.hour, t.minute);
    return buf;
}

std::optional<LocalTime> parse_local_time(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon > 2 || text.size() - colon - 1 != 2) {
        return std::nullopt;
    }
    int h, m;
    if (!read_int(text, 0, colon, h) || !read_int(text, colon + 1, 2, m)) return std::nullopt;
    if (h > 23 || m > 59) return std::nullopt;
    return LocalTime{h, m};
}

TimeZone TimeZone::load(const std::string& name) {
    static std::mutex mu;
    static std::map<std::string, absl::TimeZone> cache;
    std::lock_guard lock(mu);
    if (auto it = cache.find(name); it != cache.end()) return TimeZone(name, it->second);
    absl::TimeZone tz;
    if (!absl::LoadTimeZone(name, &tz)) throw std::invalid_argument("unknown time zone '" + name + "'");
    cache.emplace(name, tz);
    return TimeZone(name, tz);
}

TimeZone TimeZone::utc() { return TimeZone("UTC", absl::UTCTimeZone()); }

absl::CivilDay TimeZone::local_date(Instant t) const { return absl::ToCivilDay(to_absl(t), tz_); }

absl::CivilSecond TimeZone::local_civil(Instant t) const { return absl::ToCivilSecond(to_absl(t), tz_); }

LocalTime TimeZone::local_time_of_day(Instant t) const {
    const auto c = local_civil(t);
    return LocalTime{c.hour(), c.minute()};
}

Instant TimeZone::at(absl::CivilSecond civil) const {
    const absl::TimeZone::TimeInfo info = tz_.At(civil);
    switch (info.kind) {
    case absl::TimeZone::TimeInfo::SKIPPED: return from_absl(info.trans);
    case absl::TimeZone::TimeInfo::REPEATED: return from_absl(info.pre);
    case absl::TimeZone::TimeInfo::UNIQUE: break;
    }
    return from_absl(info.pre);
}

Instant TimeZone::at(absl::CivilDay day, LocalTime time) const {
    return at(absl::CivilSecond(day.year(), day.month(), day.day(), time.hour, time.minute, 0));
}

std::string format_civil_day(absl::CivilDay day) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04lld-%02d-%02d", static_cast<long long>(day.year()), day.month(), day.day());
    return buf;
}

std::optional<absl::CivilDay> parse_civil_day(std::string_view text) {
    int y, m, d;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !read_int(text, 0, 4, y) ||
        !read_int(text, 5, 2, m) || !read_int(text, 8, 2, d)) {
        return std::nullopt;
    }
    absl::CivilDay day(y, m, d);
    if (day.month() != m || day.day() != d) return std::nullopt;
    return day;
}

} // namespace protoflow
