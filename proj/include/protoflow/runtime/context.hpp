#pragma once

#include <map>
#include <string>
#include <variant>

#include <json.hpp>

#include "protoflow/common/time.hpp"

namespace protoflow::runtime {

/// Context values are text, numbers or instants; nothing else survives a snapshot.
using Value = std::variant<std::string, double, Instant>;
using Context = std::map<std::string, Value>;

/// {"text": "..."} | {"number": 1.5} | {"instant": "2021-09-09T12:00:00Z"}
nlohmann::json to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Context& c);
Context context_from_json(const nlohmann::json& j);

/// Template argument form. Instants render as local "YYYY-MM-DD HH:MM".
std::string to_text(const Value& v, const TimeZone& tz);

const Instant* get_instant(const Context& c, const std::string& key);
const std::string* get_text(const Context& c, const std::string& key);

} // namespace protoflow::runtime
