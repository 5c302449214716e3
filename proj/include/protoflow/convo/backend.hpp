#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "protoflow/common/templates.hpp"
#include "protoflow/common/time.hpp"
#include "protoflow/convo/tools.hpp"

namespace protoflow::convo {

struct ToolMatch {
    std::string tool;
    std::map<std::string, std::string> args;
    bool confident = true;

    bool operator==(const ToolMatch&) const = default;
};

/// Every match binds all required parameters of its tool.
struct ExtractionResult {
    std::vector<ToolMatch> matches;
    bool unmatched() const { return matches.empty(); }
};

nlohmann::json to_json(const ExtractionResult& r);
ExtractionResult extraction_from_json(const nlohmann::json& j);

struct RestateRequest {
    std::string question_id;
    std::string question;  // the original question text
    std::string failure_reason;
    int attempt = 1;  // inadequate answers so far
};

class BackendUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Language-model port. Throws BackendUnavailable when the model cannot be reached.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual ExtractionResult extract(const std::string& text, const std::vector<const ToolFunction*>& tools) = 0;
    virtual std::string generate_restatement(const RestateRequest& req) = 0;
};

/// Deterministic stand-in: extraction follows the tools' rule tables and
/// restatements cycle through the pack's pre-authored variants.
class ScriptedBackend final : public LlmBackend {
public:
    explicit ScriptedBackend(const TemplateSet* templates = nullptr) : templates_(templates) {}

    ExtractionResult extract(const std::string& text, const std::vector<const ToolFunction*>& tools) override;
    std::string generate_restatement(const RestateRequest& req) override;

    /// Makes the next n calls throw BackendUnavailable.
    void fail_next(int n) { fail_next_ = n; }

private:
    void maybe_fail();

    const TemplateSet* templates_;
    int fail_next_ = 0;
};

struct HttpBackendConfig {
    std::string endpoint;  // PF_LLM_ENDPOINT, a chat-completions URL
    std::string model;     // PF_LLM_MODEL
    std::string key;       // PF_LLM_KEY

    /// Nullopt unless endpoint and model are set.
    static std::optional<HttpBackendConfig> from_env();
};

/// Chat-completions adapter using function calling: each bound tool is
/// offered as a function and returned tool calls become matches.
class HttpLlmBackend final : public LlmBackend {
public:
    explicit HttpLlmBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {}

    ExtractionResult extract(const std::string& text, const std::vector<const ToolFunction*>& tools) override;
    std::string generate_restatement(const RestateRequest& req) override;

    /// Request body for extract(); exposed for inspection.
    nlohmann::json extraction_request(const std::string& text, const std::vector<const ToolFunction*>& tools) const;
    /// Parses a chat-completions response, dropping calls that miss required parameters.
    static ExtractionResult parse_extraction(const nlohmann::json& response,
                                             const std::vector<const ToolFunction*>& tools);

private:
    nlohmann::json post(const nlohmann::json& body) const;

    HttpBackendConfig cfg_;
};

} // namespace protoflow::convo
