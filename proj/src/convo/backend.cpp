#include "protoflow/convo/backend.hpp"

#include <cstdlib>
#include <regex>

#include "protoflow/common/http.hpp"
#include "protoflow/convo/time_phrase.hpp"

namespace protoflow::convo {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool contains_word(const std::string& haystack, const std::string& needle) {
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
        const bool left = pos == 0 || !is_word(haystack[pos - 1]);
        const bool right = pos + needle.size() >= haystack.size() || !is_word(haystack[pos + needle.size()]);
        if (left && right) return true;
    }
    return false;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::optional<std::string> apply(const ExtractRule& r, const std::string& text, const std::string& low) {
    switch (r.kind) {
    case ExtractRule::Kind::phrase: return find_time_phrase(text);
    case ExtractRule::Kind::number: {
        static const std::regex num(R"((^|[^\w.])(-?\d+(?:\.\d+)?)(?![\w]))");
        std::smatch m;
        if (std::regex_search(low, m, num)) return m.str(2);
        return std::nullopt;
    }
    case ExtractRule::Kind::yesno:
        for (const char* n : {"i did not", "i didn't", "not yet"}) {
            if (contains_word(low, n)) return "false";
        }
        for (const char* y : {"yes", "yeah", "yep", "y", "i did", "sure"}) {
            if (contains_word(low, y)) return "true";
        }
        for (const char* n : {"no", "nope", "n"}) {
            if (contains_word(low, n)) return "false";
        }
        return std::nullopt;
    case ExtractRule::Kind::text: {
        auto t = trim(text);
        if (t.empty()) return std::nullopt;
        return t;
    }
    case ExtractRule::Kind::keyword:
        if (contains_word(low, lower(r.keyword))) return r.value;
        return std::nullopt;
    }
    return std::nullopt;
}

bool binds_required(const ToolFunction& t, const std::map<std::string, std::string>& args) {
    for (const auto& p : t.params) {
        if (!p.optional && !args.count(p.name)) return false;
    }
    return true;
}

} // namespace

nlohmann::json to_json(const ExtractionResult& r) {
    auto arr = nlohmann::json::array();
    for (const auto& m : r.matches) arr.push_back({{"tool", m.tool}, {"args", m.args}, {"confident", m.confident}});
    return arr;
}

ExtractionResult extraction_from_json(const nlohmann::json& j) {
    ExtractionResult r;
    for (const auto& m : j) {
        r.matches.push_back({m.at("tool").get<std::string>(), m.at("args").get<std::map<std::string, std::string>>(),
                             m.at("confident").get<bool>()});
    }
    return r;
}

void ScriptedBackend::maybe_fail() {
    if (fail_next_ > 0) {
        --fail_next_;
        throw BackendUnavailable("scripted backend outage");
    }
}

ExtractionResult ScriptedBackend::extract(const std::string& text, const std::vector<const ToolFunction*>& tools) {
    maybe_fail();
    ExtractionResult out;
    const auto low = lower(text);
    for (const auto* tool : tools) {
        std::map<std::string, std::string> args;
        for (const auto& rule : tool->rules) {
            if (args.count(rule.param)) continue;
            if (auto v = apply(rule, text, low)) args[rule.param] = *v;
        }
        if (!args.empty() && binds_required(*tool, args)) out.matches.push_back({tool->name, std::move(args), true});
    }
    return out;
}

std::string ScriptedBackend::generate_restatement(const RestateRequest& req) {
    maybe_fail();
    if (templates_) {
        const auto& variants = templates_->restatements(req.question_id);
        if (!variants.empty()) return variants[static_cast<std::size_t>(req.attempt - 1) % variants.size()];
    }
    return "Sorry, I did not understand. " + req.question;
}

std::optional<HttpBackendConfig> HttpBackendConfig::from_env() {
    auto env = [](const char* k) {
        const char* v = std::getenv(k);
        return v ? std::string(v) : std::string();
    };
    HttpBackendConfig c{env("PF_LLM_ENDPOINT"), env("PF_LLM_MODEL"), env("PF_LLM_KEY")};
    if (c.endpoint.empty() || c.model.empty()) return std::nullopt;
    return c;
}

nlohmann::json HttpLlmBackend::post(const nlohmann::json& body) const {
    std::map<std::string, std::string> headers;
    if (!cfg_.key.empty()) headers["Authorization"] = "Bearer " + cfg_.key;
    auto res = http_post(cfg_.endpoint, headers, body.dump(), "application/json");
    if (res.status == 0) throw BackendUnavailable("language model unreachable: " + res.error);
    if (res.status < 200 || res.status >= 300) {
        throw BackendUnavailable("language model returned HTTP " + std::to_string(res.status));
    }
    try {
        return nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailable(std::string("unparseable model response: ") + e.what());
    }
}

nlohmann::json HttpLlmBackend::extraction_request(const std::string& text,
                                                  const std::vector<const ToolFunction*>& tools) const {
    auto fns = nlohmann::json::array();
    for (const auto* t : tools) {
        auto s = ToolSet::schema(*t);
        fns.push_back({{"type", "function"}, {"function", s}});
    }
    return {{"model", cfg_.model},
            {"temperature", 0},
            {"messages",
             {{{"role", "system"},
               {"content", "Match the participant's answer to the provided functions. Only call a function when "
                           "every required argument is stated in the answer; quote time phrases verbatim."}},
              {{"role", "user"}, {"content", text}}}},
            {"tools", fns},
            {"tool_choice", "auto"}};
}

ExtractionResult HttpLlmBackend::parse_extraction(const nlohmann::json& response,
                                                  const std::vector<const ToolFunction*>& tools) {
    ExtractionResult out;
    const auto& msg = response.at("choices").at(0).at("message");
    if (!msg.contains("tool_calls") || msg["tool_calls"].is_null()) return out;
    for (const auto& call : msg["tool_calls"]) {
        const auto name = call.at("function").at("name").get<std::string>();
        const ToolFunction* tool = nullptr;
        for (const auto* t : tools) {
            if (t->name == name) tool = t;
        }
        if (!tool) continue;
        auto raw = call.at("function").at("arguments");
        auto args_json = raw.is_string() ? nlohmann::json::parse(raw.get<std::string>()) : raw;
        std::map<std::string, std::string> args;
        for (const auto& [k, v] : args_json.items()) {
            if (!tool->param(k) || v.is_null()) continue;
            args[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        if (binds_required(*tool, args)) out.matches.push_back({name, std::move(args), false});
    }
    return out;
}

ExtractionResult HttpLlmBackend::extract(const std::string& text, const std::vector<const ToolFunction*>& tools) {
    auto response = post(extraction_request(text, tools));
    try {
        return parse_extraction(response, tools);
    } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailable(std::string("malformed tool calls: ") + e.what());
    }
}

std::string HttpLlmBackend::generate_restatement(const RestateRequest& req) {
    nlohmann::json body{
        {"model", cfg_.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"},
           {"content", "Rephrase the question for a study participant in one short sentence. Do not add facts."}},
          {{"role", "user"}, {"content", "Question: " + req.question + "\nWhy the last answer was not enough: " +
                                             req.failure_reason}}}}};
    auto response = post(body);
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailable(std::string("malformed completion: ") + e.what());
    }
}

} // namespace protoflow::convo
