#include "protoflow/convo/time_phrase.hpp"

#include <regex>

namespace protoflow::convo {

using namespace std::chrono_literals;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

// Longest phrases first so "yesterday morning" wins over "morning".
const char* const kPhrases[] = {
    "yesterday morning", "yesterday afternoon", "yesterday evening", "a few minutes ago", "in the morning",
    "in the evening", "this morning", "this afternoon", "this evening", "last night", "last week", "just now",
    "an hour ago", "yesterday", "afternoon", "morning", "evening", "tonight", "today", "now",
};

const std::regex& clock_re() {
    static const std::regex re(R"(\b(\d{1,2})(?:[:.](\d{2}))?\s*([ap])\.?\s*m\b\.?)");
    return re;
}

const std::regex& hours_ago_re() {
    static const std::regex re(R"(\b(\d{1,2})\s+hours?\s+ago\b)");
    return re;
}

bool word_boundary(const std::string& text, std::size_t pos, std::size_t len) {
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    if (pos > 0 && is_word(text[pos - 1])) return false;
    if (pos + len < text.size() && is_word(text[pos + len])) return false;
    return true;
}

TimeInterval day_window(const TimeZone& tz, absl::CivilDay day, int from_h, int to_h) {
    auto end = to_h >= 24 ? tz.at(day + 1, LocalTime{0, 0}) : tz.at(day, LocalTime{to_h, 0});
    return {tz.at(day, LocalTime{from_h, 0}), end};
}

} // namespace

std::optional<std::string> find_time_phrase(std::string_view text) {
    const auto t = lower(text);
    std::smatch m;
    if (std::regex_search(t, m, hours_ago_re())) return m.str(0);
    if (std::regex_search(t, m, clock_re())) return m.str(0);
    for (const char* p : kPhrases) {
        const std::string phrase = p;
        for (auto pos = t.find(phrase); pos != std::string::npos; pos = t.find(phrase, pos + 1)) {
            if (word_boundary(t, pos, phrase.size())) return phrase;
        }
    }
    return std::nullopt;
}

std::optional<TimeInterval> resolve_time_phrase(std::string_view phrase_in, Instant now, const TimeZone& tz) {
    const auto phrase = lower(phrase_in);
    const auto today = tz.local_date(now);
    const auto yesterday = today - 1;
    std::smatch m;
    if (std::regex_match(phrase, m, hours_ago_re())) {
        const auto at = now - std::chrono::hours(std::stoi(m[1]));
        return TimeInterval{at, at + 1min};
    }
    if (std::regex_match(phrase, m, clock_re())) {
        int h = std::stoi(m[1]);
        const int min = m[2].matched ? std::stoi(m[2]) : 0;
        if (h < 1 || h > 12 || min > 59) return std::nullopt;
        h = h % 12 + (m[3] == "p" ? 12 : 0);
        const auto at = tz.at(today, LocalTime{h, min});
        return TimeInterval{at, at + 1min};
    }
    if (phrase == "morning" || phrase == "this morning" || phrase == "in the morning") return day_window(tz, today, 6, 12);
    if (phrase == "afternoon" || phrase == "this afternoon") return day_window(tz, today, 12, 17);
    if (phrase == "evening" || phrase == "this evening" || phrase == "in the evening" || phrase == "tonight") {
        return day_window(tz, today, 17, 22);
    }
    if (phrase == "yesterday morning") return day_window(tz, yesterday, 6, 12);
    if (phrase == "yesterday afternoon") return day_window(tz, yesterday, 12, 17);
    if (phrase == "yesterday evening") return day_window(tz, yesterday, 17, 22);
    if (phrase == "last night") return day_window(tz, yesterday, 17, 24);
    if (phrase == "yesterday") return day_window(tz, yesterday, 0, 24);
    if (phrase == "last week") return TimeInterval{tz.at(today - 7, LocalTime{0, 0}), tz.at(today, LocalTime{0, 0})};
    if (phrase == "today") return TimeInterval{tz.at(today, LocalTime{0, 0}), now + 1ms};
    if (phrase == "now" || phrase == "just now" || phrase == "a few minutes ago") return TimeInterval{now - 10min, now + 1ms};
    if (phrase == "an hour ago") return TimeInterval{now - 1h, now - 1h + 1min};
    return std::nullopt;
}

} // namespace protoflow::convo
