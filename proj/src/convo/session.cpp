#include "protoflow/convo/session.hpp"

namespace protoflow::convo {

std::string_view to_string(SessionStatus s) {
    switch (s) {
    case SessionStatus::open: return "open";
    case SessionStatus::satisfied: return "satisfied";
    case SessionStatus::escalated: return "escalated";
    }
    return "?";
}

std::string_view to_string(AnswerOutcome::Kind k) {
    switch (k) {
    case AnswerOutcome::Kind::adequate: return "adequate";
    case AnswerOutcome::Kind::restate: return "restate";
    case AnswerOutcome::Kind::escalate: return "escalate";
    case AnswerOutcome::Kind::ignored: return "ignored";
    }
    return "?";
}

bool ConversationSession::operator==(const ConversationSession& o) const { return to_json(*this) == to_json(o); }

nlohmann::json to_json(const ConversationSession& s) {
    auto hist = nlohmann::json::array();
    for (const auto& e : s.history) hist.push_back({{"question", e.question}, {"answer", e.answer}, {"outcome", e.outcome}});
    return {{"session_id", s.session_id},
            {"participant_id", s.participant_id},
            {"question_id", s.question_id},
            {"pending_question", s.pending_question},
            {"tools", s.tools},
            {"attempt_count", s.attempt_count},
            {"history", std::move(hist)},
            {"status", to_string(s.status)}};
}

ConversationSession session_from_json(const nlohmann::json& j) {
    ConversationSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.participant_id = j.at("participant_id").get<std::string>();
    s.question_id = j.at("question_id").get<std::string>();
    s.pending_question = j.at("pending_question").get<std::string>();
    s.tools = j.at("tools").get<std::vector<std::string>>();
    s.attempt_count = j.at("attempt_count").get<int>();
    for (const auto& e : j.at("history")) {
        s.history.push_back({e.at("question").get<std::string>(), e.at("answer").get<std::string>(),
                             e.at("outcome").get<std::string>()});
    }
    const auto st = j.at("status").get<std::string>();
    s.status = st == "open" ? SessionStatus::open : st == "satisfied" ? SessionStatus::satisfied : SessionStatus::escalated;
    return s;
}

std::string ask(ConversationSession& s, const TemplateSet& templates, const std::string& question_id,
                const std::map<std::string, std::string>& args) {
    if (s.status != SessionStatus::open) {
        throw SessionClosed("session " + s.session_id + " is " + std::string(to_string(s.status)));
    }
    auto text = templates.render(question_id, args);
    s.question_id = question_id;
    s.pending_question = text;
    return text;
}

AnswerOutcome handle_answer(ConversationSession& s, const std::string& answer, const AnswerContext& ctx) {
    AnswerOutcome out;
    if (s.status != SessionStatus::open) {
        out.notes.push_back("answer for " + std::string(to_string(s.status)) + " session " + s.session_id + " ignored");
        return out;
    }

    std::vector<const ToolFunction*> bound;
    for (const auto& name : s.tools) {
        if (const auto* t = ctx.tools ? ctx.tools->find(name) : nullptr) bound.push_back(t);
    }

    std::string reason;
    if (ctx.recorded_extraction) {
        out.extraction = *ctx.recorded_extraction;
    } else {
        try {
            out.extraction = ctx.backend->extract(answer, bound);
        } catch (const BackendUnavailable& e) {
            out.backend_failed = true;
            out.notes.push_back(std::string("backend failure: ") + e.what());
            reason = "the answer could not be processed";
        }
    }

    for (const auto& m : out.extraction.matches) {
        const ToolFunction* tool = ctx.tools ? ctx.tools->find(m.tool) : nullptr;
        if (!tool) continue;
        ValidationResult v{true, ""};
        if (tool->validator) {
            const Validator* fn = ctx.validators ? ctx.validators->find(*tool->validator) : nullptr;
            v = fn ? (*fn)(m, ctx.validation) : ValidationResult{false, "unknown validator '" + *tool->validator + "'"};
        }
        if (v.ok) {
            out.values.push_back({m.tool, m.args});
        } else {
            out.notes.push_back(m.tool + ": " + v.note);
            if (reason.empty()) reason = v.note;
        }
    }
    if (reason.empty() && out.extraction.unmatched() && !out.backend_failed) reason = "no answer to the question found";

    if (!out.values.empty()) {
        out.kind = AnswerOutcome::Kind::adequate;
        s.status = SessionStatus::satisfied;
        s.history.push_back({s.pending_question, answer, "adequate"});
        return out;
    }

    ++s.attempt_count;
    if (s.attempt_count >= kMaxAttempts) {
        out.kind = AnswerOutcome::Kind::escalate;
        s.status = SessionStatus::escalated;
        out.notification = "Participant " + s.participant_id + " gave " + std::to_string(kMaxAttempts) +
                           " inadequate answers to: " + s.pending_question;
        s.history.push_back({s.pending_question, answer, "escalate"});
        return out;
    }

    out.kind = AnswerOutcome::Kind::restate;
    const auto original = s.history.empty() ? s.pending_question : s.history.front().question;
    if (ctx.recorded_restatement) {
        out.restatement = *ctx.recorded_restatement;
    } else {
        try {
            out.restatement = ctx.backend->generate_restatement({s.question_id, original, reason, s.attempt_count});
        } catch (const BackendUnavailable& e) {
            out.notes.push_back(std::string("backend failure: ") + e.what());
            out.restatement = "Sorry, I did not understand. " + original;
        }
    }
    s.history.push_back({s.pending_question, answer, "restate"});
    s.pending_question = out.restatement;
    return out;
}

} // namespace protoflow::convo
