#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/templates.hpp"
#include "protoflow/convo/backend.hpp"
#include "protoflow/convo/tools.hpp"
#include "protoflow/convo/validators.hpp"

namespace protoflow::convo {

inline constexpr int kMaxAttempts = 3;

enum class SessionStatus { open, satisfied, escalated };

std::string_view to_string(SessionStatus s);

struct Exchange {
    std::string question;
    std::string answer;
    std::string outcome;  // adequate | restate | escalate
};

struct ConversationSession {
    std::string session_id;
    std::string participant_id;
    std::string question_id;
    std::string pending_question;
    std::vector<std::string> tools;
    int attempt_count = 0;  // inadequate answers so far, at most kMaxAttempts
    std::vector<Exchange> history;
    SessionStatus status = SessionStatus::open;

    bool operator==(const ConversationSession& o) const;
};

nlohmann::json to_json(const ConversationSession& s);
ConversationSession session_from_json(const nlohmann::json& j);

class SessionClosed : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Renders `question_id` and makes it the pending question. The attempt
/// count is untouched. Throws SessionClosed unless the session is open and
/// RenderError for a bad template.
std::string ask(ConversationSession& s, const TemplateSet& templates, const std::string& question_id,
                const std::map<std::string, std::string>& args = {});

struct ValidatedValue {
    std::string tool;
    std::map<std::string, std::string> args;
};

struct AnswerOutcome {
    enum class Kind { adequate, restate, escalate, ignored };

    Kind kind = Kind::ignored;
    std::vector<ValidatedValue> values;  // adequate: every match whose validator passed
    ExtractionResult extraction;
    std::string restatement;
    std::string notification;  // escalate only
    std::vector<std::string> notes;
    bool backend_failed = false;
};

std::string_view to_string(AnswerOutcome::Kind k);

struct AnswerContext {
    LlmBackend* backend = nullptr;
    const ToolSet* tools = nullptr;
    const ValidatorRegistry* validators = nullptr;
    ValidationContext validation;
    /// When set, used instead of calling the backend (replaying a logged extraction).
    const ExtractionResult* recorded_extraction = nullptr;
    const std::string* recorded_restatement = nullptr;
};

/// Judges one answer. Adequate when at least one extracted match passes its
/// tool's validator (a tool without validator passes when matched). Inadequate
/// answers restate on attempts 1 and 2 and escalate on the third. Answers to a
/// closed session come back as `ignored` and change nothing.
AnswerOutcome handle_answer(ConversationSession& s, const std::string& answer, const AnswerContext& ctx);

} // namespace protoflow::convo
