#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace protoflow {

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Message templates of a pack. Text uses {name} placeholders; "{{" and "}}"
/// are literal braces.
///
///   [templates]
///   ack_start = "Got it, your eating window started at {start_time}."
///   [restate]
///   med_checkin = ["variant one", "variant two", "variant three"]
class TemplateSet {
public:
    static TemplateSet from_config(const nlohmann::json& cfg);
    static TemplateSet load(const std::string& path);

    bool contains(const std::string& id) const { return texts_.count(id) > 0; }
    const std::string& text(const std::string& id) const;
    const std::vector<std::string>& restatements(const std::string& id) const;

    /// Throws RenderError for an unknown id or a placeholder without a value.
    std::string render(const std::string& id, const std::map<std::string, std::string>& args) const;

    void set(const std::string& id, std::string text) { texts_[id] = std::move(text); }
    const std::map<std::string, std::string>& all() const { return texts_; }

private:
    std::map<std::string, std::string> texts_;
    std::map<std::string, std::vector<std::string>> restate_;
};

std::string render_text(const std::string& text, const std::map<std::string, std::string>& args);

} // namespace protoflow
