#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace protoflow {

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Small TOML subset used for config files, message templates and scenarios:
///
///   # comment
///   key = "text" | 42 | 1.5 | true | ["a", "b"]
///   [section]            # keys below land in result["section"]
///   [section.child]      # nested tables
///
/// Returns a JSON object. Duplicate keys are an error.
nlohmann::json parse_text_config(std::string_view text);

nlohmann::json load_text_config(const std::string& path);

} // namespace protoflow
