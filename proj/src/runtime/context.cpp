#include "protoflow/runtime/context.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace protoflow::runtime {

nlohmann::json to_json(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return {{"text", *s}};
    if (const auto* d = std::get_if<double>(&v)) return {{"number", *d}};
    return {{"instant", format_rfc3339(std::get<Instant>(v))}};
}

Value value_from_json(const nlohmann::json& j) {
    if (j.contains("text")) return j.at("text").get<std::string>();
    if (j.contains("number")) return j.at("number").get<double>();
    if (j.contains("instant")) return parse_rfc3339(j.at("instant").get<std::string>());
    throw std::invalid_argument("context value must be text, number or instant");
}

nlohmann::json to_json(const Context& c) {
    auto out = nlohmann::json::object();
    for (const auto& [k, v] : c) out[k] = to_json(v);
    return out;
}

Context context_from_json(const nlohmann::json& j) {
    Context c;
    for (const auto& [k, v] : j.items()) c[k] = value_from_json(v);
    return c;
}

std::string to_text(const Value& v, const TimeZone& tz) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    if (const auto* d = std::get_if<double>(&v)) {
        if (std::floor(*d) == *d && std::abs(*d) < 1e15) return std::to_string(static_cast<long long>(*d));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", *d);
        return buf;
    }
    const auto c = tz.local_civil(std::get<Instant>(v));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02d-%02d %02d:%02d", static_cast<long long>(c.year()), c.month(), c.day(),
                  c.hour(), c.minute());
    return buf;
}

const Instant* get_instant(const Context& c, const std::string& key) {
    auto it = c.find(key);
    return it == c.end() ? nullptr : std::get_if<Instant>(&it->second);
}

const std::string* get_text(const Context& c, const std::string& key) {
    auto it = c.find(key);
    return it == c.end() ? nullptr : std::get_if<std::string>(&it->second);
}

} // namespace protoflow::runtime
