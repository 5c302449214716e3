#include "protoflow/runtime/engine.hpp"

#include <algorithm>

#include "protoflow/convo/backend.hpp"

namespace protoflow::runtime {

using gateway::InboundMessage;
using gateway::OutboundMessage;
using nlohmann::json;

namespace {

std::string state_timer_id(const std::string& key) { return "@" + key; }

/// Wraps the live backend and remembers what it said, for the tool_call record.
class RecordingBackend final : public convo::LlmBackend {
public:
    explicit RecordingBackend(convo::LlmBackend& inner) : inner_(inner) {}

    convo::ExtractionResult extract(const std::string& text,
                                    const std::vector<const convo::ToolFunction*>& tools) override {
        try {
            extraction = inner_.extract(text, tools);
            extracted = true;
            return extraction;
        } catch (const convo::BackendUnavailable& e) {
            errors.push_back({{"call", "extract"}, {"error", e.what()}});
            throw;
        }
    }

    std::string generate_restatement(const convo::RestateRequest& req) override {
        try {
            restatement = inner_.generate_restatement(req);
            return *restatement;
        } catch (const convo::BackendUnavailable& e) {
            errors.push_back({{"call", "restate"}, {"error", e.what()}});
            throw;
        }
    }

    convo::LlmBackend& inner_;
    convo::ExtractionResult extraction;
    bool extracted = false;
    std::optional<std::string> restatement;
    json errors = json::array();
};

/// Answers exactly as a logged tool_call record says the live backend did.
class ReplayBackend final : public convo::LlmBackend {
public:
    explicit ReplayBackend(const json& detail) : detail_(detail) {}

    convo::ExtractionResult extract(const std::string&, const std::vector<const convo::ToolFunction*>&) override {
        fail_if("extract");
        return convo::extraction_from_json(detail_.at("extraction"));
    }

    std::string generate_restatement(const convo::RestateRequest&) override {
        fail_if("restate");
        return detail_.at("restatement").get<std::string>();
    }

private:
    void fail_if(const char* call) {
        for (const auto& e : detail_.at("backend_errors")) {
            if (e.at("call") == call) throw convo::BackendUnavailable(e.at("error").get<std::string>());
        }
    }

    const json& detail_;
};

json study_json(const Study& s) {
    return {{"study_id", s.study_id},
            {"name", s.name},
            {"pack", s.pack->name},
            {"pack_hash", s.pack->hash},
            {"timezone", s.timezone},
            {"staff", s.staff},
            {"status", s.status == StudyStatus::active ? "active" : "closed"},
            {"created_at", format_rfc3339(s.created_at)}};
}

} // namespace

json to_json(const ReceiveOutcome& o) {
    json j{{"message_id", o.message_id},
           {"participant_id", o.participant_id},
           {"dead_letter", o.dead_letter},
           {"handled_by", o.handled_by}};
    if (o.transition) j["transition"] = to_json(*o.transition);
    if (o.answer) j["answer"] = convo::to_string(*o.answer);
    return j;
}

json to_json(const EngineStats& s) {
    return {{"messages_in", s.messages_in},       {"dead_letters", s.dead_letters},
            {"unrecognized", s.unrecognized},     {"messages_sent", s.messages_sent},
            {"send_failures", s.send_failures},   {"transitions", s.transitions},
            {"rejections", s.rejections},         {"manual_transitions", s.manual_transitions},
            {"notifications", s.notifications},   {"timers_fired", s.timers_fired},
            {"tool_calls", s.tool_calls}};
}

EngineStats stats_from_json(const json& j) {
    EngineStats s;
    s.messages_in = j.at("messages_in");
    s.dead_letters = j.at("dead_letters");
    s.unrecognized = j.at("unrecognized");
    s.messages_sent = j.at("messages_sent");
    s.send_failures = j.at("send_failures");
    s.transitions = j.at("transitions");
    s.rejections = j.at("rejections");
    s.manual_transitions = j.at("manual_transitions");
    s.notifications = j.at("notifications");
    s.timers_fired = j.at("timers_fired");
    s.tool_calls = j.at("tool_calls");
    return s;
}

Engine::Engine(EngineOptions options, const sched::Clock& clock, std::shared_ptr<const BindingsRegistry> bindings)
    : options_(std::move(options)),
      clock_(&clock),
      bindings_(bindings ? std::move(bindings) : std::make_shared<BindingsRegistry>()),
      validators_(convo::ValidatorRegistry::with_builtins()),
      outbox_(options_.pool, options_.retry) {
    for (const auto& a : options_.staff) {
        if (!gateway::classify_address(a)) throw std::invalid_argument("bad staff address '" + a + "'");
    }
}

// ---------------------------------------------------------------- plumbing

Instant Engine::begin(Instant now) {
    if (last_now_ && now < *last_now_) now = *last_now_;
    last_now_ = now;
    if (catch_up_pending_) {
        scheduler_.set_catch_up(true);
        advance(now);
        scheduler_.set_catch_up(false);
        catch_up_pending_ = false;
    } else {
        advance(now);
    }
    return now;
}

void Engine::advance(Instant now) {
    while (auto e = scheduler_.pop_due(now)) fire_timer(*e, now);
    dispatch_outbox(now);
}

const AuditRecord* Engine::expected() const {
    if (!replay_ || replay_pos_ >= replay_->size()) return nullptr;
    return &(*replay_)[replay_pos_];
}

AuditRecord& Engine::audit(AuditKind kind, const std::string& pid, Instant now, json detail) {
    AuditRecord r{next_seq_++, pid, now, kind, std::move(detail)};
    if (replay_) {
        const auto* exp = expected();
        if (exp) {
            const auto want = canonical(*exp);
            const auto got = canonical(r);
            if (want != got) {
                throw ReplayDivergence("audit record " + std::to_string(r.seq) + " differs on replay\n  logged:   " +
                                       want + "\n  replayed: " + got);
            }
        }
        if (++replay_pos_ >= replay_->size()) replay_ = nullptr;
    } else if (sink_) {
        sink_->append(r);
    }
    audit_.push_back(std::move(r));
    if (!pid.empty()) audit_index_[pid].push_back(audit_.size() - 1);
    return audit_.back();
}

const Study& Engine::study_of(const ParticipantMachine& m) const { return studies_.at(m.study_id); }

const HostBindings& Engine::bindings_of(const Study& s) const { return bindings_->get(s.pack->interpreter()); }

TimeZone Engine::tz_of(const ParticipantMachine& m) const { return TimeZone::load(m.timezone); }

EngineEvent Engine::make_event(EventKind kind, const std::string& pid, std::string trigger, Context payload,
                               Instant now) {
    return EngineEvent{next_event_++, kind, pid, std::move(trigger), std::move(payload), now};
}

// ---------------------------------------------------------------- studies

const Study& Engine::create_study(const StudyConfig& cfg, std::shared_ptr<const Pack> pack) {
    const auto now = begin(clock_->now());
    const auto& s = do_create_study("study-" + std::to_string(next_study_), cfg, std::move(pack), now);
    dispatch_outbox(now);
    return s;
}

const Study& Engine::do_create_study(const std::string& id, const StudyConfig& cfg, std::shared_ptr<const Pack> pack,
                                     Instant now) {
    if (!pack) throw std::invalid_argument("study needs a protocol pack");
    bindings_of(Study{"", "", pack});  // throws for an unknown interpreter
    TimeZone::load(cfg.timezone);
    for (const auto& a : cfg.staff) {
        if (!gateway::classify_address(a)) throw std::invalid_argument("bad staff address '" + a + "'");
    }
    ++next_study_;
    Study s{id, cfg.name, std::move(pack), cfg.timezone, cfg.staff, StudyStatus::active, now};
    auto& stored = studies_[id] = std::move(s);
    json detail = study_json(stored);
    detail["op"] = "create_study";
    audit(AuditKind::admin, "", now, std::move(detail));
    return stored;
}

void Engine::close_study(const std::string& study_id) {
    const auto now = begin(clock_->now());
    auto it = studies_.find(study_id);
    if (it == studies_.end()) throw UnknownStudy("unknown study '" + study_id + "'");
    it->second.status = StudyStatus::closed;
    audit(AuditKind::admin, "", now, {{"op", "close_study"}, {"study_id", study_id}});
    dispatch_outbox(now);
}

// ---------------------------------------------------------------- registration

const ParticipantMachine& Engine::register_participant(const std::string& study_id, const std::string& participant_id,
                                                       const std::string& address, const std::string& timezone) {
    auto sit = studies_.find(study_id);
    if (sit == studies_.end()) throw UnknownStudy("unknown study '" + study_id + "'");
    if (participant_id.empty()) throw std::invalid_argument("participant id must not be empty");
    if (machines_.count(participant_id)) throw DuplicateParticipant("participant '" + participant_id + "' exists");
    if (by_address_.count(address)) throw DuplicateParticipant("address '" + address + "' already registered");
    if (!gateway::classify_address(address)) throw std::invalid_argument("bad address '" + address + "'");
    if (sit->second.status != StudyStatus::active) throw std::invalid_argument("study '" + study_id + "' is closed");
    TimeZone::load(timezone.empty() ? sit->second.timezone : timezone);
    const auto now = begin(clock_->now());
    const auto& m = do_register(study_id, participant_id, address, timezone, now);
    dispatch_outbox(now);
    return m;
}

const ParticipantMachine& Engine::do_register(const std::string& study_id, const std::string& pid,
                                              const std::string& address, const std::string& timezone, Instant now) {
    const auto& st = studies_.at(study_id);
    const auto& proto = st.pack->protocol;
    ParticipantMachine m;
    m.participant_id = pid;
    m.study_id = study_id;
    m.protocol_version = proto.version_hash();
    m.current_state = proto.state(proto.initial_state()).name;
    m.state_entered_at = now;
    m.address = address;
    m.timezone = timezone.empty() ? st.timezone : timezone;
    m.registered_at = now;
    auto& stored = machines_[pid] = std::move(m);
    by_address_[address] = pid;
    audit(AuditKind::registration, pid, now,
          {{"study_id", study_id},
           {"address", address},
           {"timezone", stored.timezone},
           {"protocol_version", stored.protocol_version},
           {"state", stored.current_state}});
    enter(stored, proto.initial_state(), now);
    return stored;
}

// ---------------------------------------------------------------- inbound

ReceiveOutcome Engine::receive(InboundMessage msg) {
    const auto now = begin(clock_->now());
    auto out = do_receive(std::move(msg), now);
    dispatch_outbox(now);
    return out;
}

ReceiveOutcome Engine::do_receive(InboundMessage msg, Instant now) {
    if (msg.message_id.empty()) msg.message_id = "in-" + std::to_string(next_seq_);
    if (msg.received_at == Instant{}) msg.received_at = now;
    ReceiveOutcome out;
    out.message_id = msg.message_id;

    const auto kind = gateway::classify_address(msg.from_address);
    auto ait = kind ? by_address_.find(msg.from_address) : by_address_.end();
    const std::string pid = ait == by_address_.end() ? "" : ait->second;
    audit(AuditKind::message_in, pid, now, {{"message", gateway::to_json(msg)}});
    ++stats_.messages_in;

    if (pid.empty()) {
        out.dead_letter = true;
        out.handled_by = "ignored";
        ++stats_.dead_letters;
        if (store_) store_->put(gateway::stored(msg, "", true));
        notify("", "", std::string(kind ? "message from unregistered sender " : "message from malformed address ") +
                           msg.from_address,
               now);
        return out;
    }

    auto& m = machines_.at(pid);
    out.participant_id = pid;
    ++m.messages_in;
    if (store_) store_->put(gateway::stored(msg, pid, false));

    const auto& st = study_of(m);
    const auto& proto = st.pack->protocol;
    const auto& hb = bindings_of(st);
    if (m.status != MachineStatus::active) {
        audit(AuditKind::rejection, pid, now,
              {{"reason", "participant " + std::string(to_string(m.status))},
               {"state", m.current_state},
               {"message_id", msg.message_id}});
        ++stats_.rejections;
        out.handled_by = "rejected";
        return out;
    }

    const auto tz = tz_of(m);
    auto cls = hb.classify(m, msg, tz);
    const auto idx = *proto.state_index(m.current_state);
    const bool matches = cls.trigger && !proto.candidates(idx, *cls.trigger).empty();
    auto sit = open_sessions_.find(pid);

    if (matches || (cls.trigger && !cls.unrecognized && sit == open_sessions_.end())) {
        auto ev = make_event(EventKind::inbound_message, pid, *cls.trigger, std::move(cls.payload), now);
        out.transition = dispatch(m, ev, now);
        out.handled_by = out.transition->applied() ? "transition" : "rejected";
        return out;
    }
    if (sit != open_sessions_.end()) {
        answer(m, sessions_.at(sit->second), msg, now, out);
        out.handled_by = "session";
        return out;
    }

    json detail{{"reason", "unrecognized"},
                {"state", m.current_state},
                {"message_id", msg.message_id},
                {"unrecognized", true},
                {"classification", cls.detail}};
    if (cls.trigger) detail["trigger"] = *cls.trigger;
    if (cls.response) detail["response"] = *cls.response;
    audit(AuditKind::rejection, pid, now, std::move(detail));
    ++stats_.rejections;
    ++stats_.unrecognized;
    ++m.unrecognized;
    if (cls.response) send_text(&m, m.address, *cls.response, now);
    out.handled_by = "rejected";
    return out;
}

void Engine::answer(ParticipantMachine& m, convo::ConversationSession& s, const InboundMessage& msg, Instant now,
                    ReceiveOutcome& out) {
    const auto& st = study_of(m);
    const auto& pack = *st.pack;
    const auto tz = tz_of(m);

    convo::AnswerContext ctx;
    ctx.tools = &pack.tools;
    ctx.validators = &validators_;
    ctx.validation = {m.participant_id, emr_, now, &tz};

    convo::ScriptedBackend scripted(&pack.templates);
    convo::LlmBackend& live = backend_ ? *backend_ : scripted;
    RecordingBackend recording(live);
    std::optional<ReplayBackend> replayed;
    if (replay_) {
        const auto* exp = expected();
        if (!exp || exp->kind != AuditKind::tool_call) {
            throw ReplayDivergence("expected a tool_call record at seq " + std::to_string(next_seq_));
        }
        replayed.emplace(exp->detail);
        ctx.backend = &*replayed;
    } else {
        ctx.backend = &recording;
    }

    const auto session_id = s.session_id;
    const auto question_id = s.question_id;
    auto result = convo::handle_answer(s, msg.body, ctx);
    ++stats_.tool_calls;

    json values = json::array();
    for (const auto& v : result.values) values.push_back({{"tool", v.tool}, {"args", v.args}});
    json detail{{"session_id", session_id},
                {"question_id", question_id},
                {"answer", msg.body},
                {"message_id", msg.message_id},
                {"outcome", convo::to_string(result.kind)},
                {"values", std::move(values)},
                {"notes", result.notes},
                {"attempt", s.attempt_count}};
    if (replayed) {
        const auto& logged = expected()->detail;
        detail["extraction"] = logged.at("extraction");
        detail["restatement"] = logged.at("restatement");
        detail["backend_errors"] = logged.at("backend_errors");
    } else {
        detail["extraction"] = recording.extracted ? convo::to_json(recording.extraction) : json();
        detail["restatement"] = recording.restatement ? json(*recording.restatement) : json();
        detail["backend_errors"] = recording.errors;
    }
    audit(AuditKind::tool_call, m.participant_id, now, std::move(detail));
    out.answer = result.kind;

    const std::vector<std::string> tools = s.tools;
    const auto pid = m.participant_id;
    if (s.status != convo::SessionStatus::open) {
        open_sessions_.erase(pid);
        sessions_.erase(session_id);  // `s` dangles from here on
    }

    switch (result.kind) {
    case convo::AnswerOutcome::Kind::adequate:
        for (const auto& v : result.values) {
            for (const auto& [k, val] : v.args) m.context[v.tool + "." + k] = val;
        }
        for (const auto& v : result.values) {
            auto ev = make_event(EventKind::tool_result, pid,
                                 dsl::trigger_key(dsl::ToolResultTrigger{v.tool, "adequate"}), {}, now);
            out.transition = dispatch(m, ev, now);
        }
        break;
    case convo::AnswerOutcome::Kind::restate: send_text(&m, m.address, result.restatement, now); break;
    case convo::AnswerOutcome::Kind::escalate: {
        if (!tools.empty()) {
            auto ev = make_event(EventKind::tool_result, pid,
                                 dsl::trigger_key(dsl::ToolResultTrigger{tools.front(), "escalated"}), {}, now);
            out.transition = dispatch(m, ev, now);
        }
        // An escalation state notifies staff on entry; one notice per escalation.
        const auto& proto = study_of(m).pack->protocol;
        const bool entered_escalation = out.transition && out.transition->applied() &&
                                        proto.state(*proto.state_index(out.transition->to_state)).escalation;
        if (!entered_escalation) notify(pid, m.study_id, result.notification, now);
        break;
    }
    case convo::AnswerOutcome::Kind::ignored: break;
    }
}

// ---------------------------------------------------------------- transitions

TransitionOutcome Engine::dispatch(ParticipantMachine& m, const EngineEvent& ev, Instant now) {
    TransitionOutcome out;
    out.from_state = m.current_state;
    json base{{"event_id", ev.event_id},
              {"event", to_string(ev.kind)},
              {"trigger", ev.trigger},
              {"state", m.current_state}};
    auto reject = [&](TransitionOutcome::Result r, std::string reason, json extra = json::object()) {
        out.result = r;
        out.reason = reason;
        json d = base;
        d["reason"] = std::move(reason);
        for (auto& [k, v] : extra.items()) d[k] = v;
        audit(AuditKind::rejection, m.participant_id, now, std::move(d));
        ++stats_.rejections;
        return out;
    };

    if (m.status != MachineStatus::active) {
        return reject(TransitionOutcome::Result::rejected, "participant " + std::string(to_string(m.status)));
    }
    const auto& st = study_of(m);
    const auto& proto = st.pack->protocol;
    const auto idx = *proto.state_index(m.current_state);
    const auto cands = proto.candidates(idx, ev.trigger);
    if (cands.empty()) return reject(TransitionOutcome::Result::no_match, "no_match");

    const auto& hb = bindings_of(st);
    const auto tz = tz_of(m);
    json failed = json::array();
    for (auto c : cands) {
        const auto& t = proto.transitions()[c];
        if (t.guard) {
            auto ok = hb.evaluate_guard(*t.guard, m, ev.payload, now, tz);
            if (!ok) {
                return reject(TransitionOutcome::Result::rejected, "unknown guard '" + *t.guard + "'",
                              {{"transition", t.index}});
            }
            if (!*ok) {
                failed.push_back(*t.guard);
                continue;
            }
        }
        apply(m, t, ev, now, out);
        return out;
    }
    return reject(TransitionOutcome::Result::rejected, "guard_failed", {{"guards", failed}});
}

void Engine::apply(ParticipantMachine& m, const dsl::CompiledTransition& t, const EngineEvent& ev, Instant now,
                   TransitionOutcome& out) {
    const auto& proto = study_of(m).pack->protocol;
    const auto& src = proto.state(t.from);
    const auto& dst = proto.state(t.to);

    run_actions(m, src.exit_actions, now);
    leave_timers(m, t.from);
    for (const auto& [k, v] : ev.payload) m.context[k] = v;
    json detail{{"event_id", ev.event_id},
                {"event", to_string(ev.kind)},
                {"trigger", t.key},
                {"from", src.name},
                {"to", dst.name},
                {"transition", t.index}};
    if (t.guard) detail["guard"] = *t.guard;
    audit(AuditKind::transition, m.participant_id, now, std::move(detail));
    ++stats_.transitions;
    run_actions(m, t.actions, now);
    enter(m, t.to, now);

    out.result = TransitionOutcome::Result::applied;
    out.to_state = dst.name;
    out.transition = t.index;
    out.actions_emitted = src.exit_actions;
    out.actions_emitted.insert(out.actions_emitted.end(), t.actions.begin(), t.actions.end());
    out.actions_emitted.insert(out.actions_emitted.end(), dst.entry_actions.begin(), dst.entry_actions.end());
}

void Engine::enter(ParticipantMachine& m, std::size_t state, Instant now) {
    const auto& s = study_of(m).pack->protocol.state(state);
    m.current_state = s.name;
    m.state_entered_at = now;
    run_actions(m, s.entry_actions, now);
    if (s.terminal) {
        m.status = MachineStatus::completed;
        scheduler_.cancel_all(m.participant_id);
        if (auto it = open_sessions_.find(m.participant_id); it != open_sessions_.end()) {
            sessions_.erase(it->second);
            open_sessions_.erase(it);
        }
        return;
    }
    for (const auto& key : s.state_timers) {
        auto trig = dsl::parse_trigger_key(key);
        if (const auto* after = std::get_if<dsl::AfterTrigger>(&*trig)) {
            scheduler_.schedule_at(m.participant_id, state_timer_id(key), now + after->delay, key);
        } else if (const auto* at = std::get_if<dsl::AtTrigger>(&*trig)) {
            scheduler_.schedule_daily(m.participant_id, state_timer_id(key), {at->time, m.timezone}, now, key);
        }
    }
}

void Engine::leave_timers(ParticipantMachine& m, std::size_t state) {
    for (const auto& key : study_of(m).pack->protocol.state(state).state_timers) {
        scheduler_.cancel(m.participant_id, state_timer_id(key));
    }
}

void Engine::run_actions(ParticipantMachine& m, const std::vector<dsl::ActionSpec>& actions, Instant now) {
    for (const auto& a : actions) {
        switch (a.kind) {
        case dsl::ActionKind::send_message: send_template(m, a.arguments.at(0), now); break;
        case dsl::ActionKind::schedule: {
            const auto& id = a.arguments.at(0);
            const auto delay = parse_duration(a.arguments.at(1)).value();
            auto r = scheduler_.schedule_at(m.participant_id, id, now + delay,
                                            dsl::trigger_key(dsl::NamedTimerTrigger{id}));
            json d{{"action", "scheduled"}, {"timer_id", id}, {"due_at", format_rfc3339(r.event.due_at)}};
            if (r.replaced) d["replaced_due_at"] = format_rfc3339(r.replaced->due_at);
            audit(AuditKind::timer, m.participant_id, now, std::move(d));
            break;
        }
        case dsl::ActionKind::cancel: {
            const auto& id = a.arguments.at(0);
            const bool removed = scheduler_.cancel(m.participant_id, id);
            audit(AuditKind::timer, m.participant_id, now,
                  {{"action", "cancelled"}, {"timer_id", id}, {"removed", removed}});
            break;
        }
        case dsl::ActionKind::record_metric: {
            const auto& name = a.arguments.at(0);
            auto detail = bindings_of(study_of(m)).record_metric(name, m, now, tz_of(m));
            if (!detail.is_object()) detail = json{{"value", detail}};
            detail["name"] = name;
            detail["at"] = format_rfc3339(now);
            m.metrics.push_back(detail);
            audit(AuditKind::metric, m.participant_id, now, std::move(detail));
            break;
        }
        case dsl::ActionKind::notify_staff: notify(m.participant_id, m.study_id, a.arguments.at(0), now); break;
        }
    }
}

// ---------------------------------------------------------------- outbound

void Engine::send_template(ParticipantMachine& m, const std::string& template_id, Instant now) {
    const auto& st = study_of(m);
    const auto& pack = *st.pack;
    std::string body;
    try {
        if (auto special = bindings_of(st).render(template_id, m, pack.templates)) {
            body = std::move(*special);
        } else {
            std::map<std::string, std::string> args;
            const auto tz = tz_of(m);
            for (const auto& [k, v] : m.context) args[k] = to_text(v, tz);
            args["participant_id"] = m.participant_id;
            body = pack.templates.render(template_id, args);
        }
    } catch (const RenderError& e) {
        audit(AuditKind::message_out, m.participant_id, now,
              {{"status", "failed"}, {"template", template_id}, {"to", m.address}, {"error", e.what()}});
        ++stats_.send_failures;
        return;
    }
    if (const auto* q = pack.tools.question(template_id)) {
        if (auto it = open_sessions_.find(m.participant_id); it != open_sessions_.end()) sessions_.erase(it->second);
        convo::ConversationSession s;
        s.session_id = "session-" + std::to_string(next_session_++);
        s.participant_id = m.participant_id;
        s.question_id = template_id;
        s.pending_question = body;
        s.tools = q->tools;
        open_sessions_[m.participant_id] = s.session_id;
        sessions_[s.session_id] = std::move(s);
    }
    send_text(&m, m.address, body, now);
}

void Engine::send_text(ParticipantMachine* m, const std::string& to, const std::string& body, Instant now) {
    OutboundMessage o;
    o.message_id = "out-" + std::to_string(next_message_++);
    o.participant_id = m ? m->participant_id : "";
    o.to_address = to;
    o.body = body;
    o.created_at = now;
    try {
        outbox_.enqueue(o, now);
    } catch (const gateway::NoCapacity& e) {
        audit(AuditKind::message_out, o.participant_id, now,
              {{"message_id", o.message_id}, {"to", to}, {"body", body}, {"status", "failed"}, {"error", e.what()}});
        ++stats_.send_failures;
        return;
    }
    if (m) ++m->messages_out;
}

void Engine::dispatch_outbox(Instant now) {
    std::size_t k = 0;
    auto send = [&](const OutboundMessage& msg, Instant at) -> gateway::SendResult {
        if (replay_ && replay_pos_ + k < replay_->size()) {
            const auto& r = (*replay_)[replay_pos_ + k++];
            if (r.kind != AuditKind::message_out || r.detail.value("message_id", "") != msg.message_id) {
                throw ReplayDivergence("expected the send record of " + msg.message_id + " at seq " +
                                       std::to_string(r.seq));
            }
            return {r.detail.at("status") == "sent", r.detail.value("error", "")};
        }
        ++k;
        if (gateway::is_chat_address(msg.to_address) || !provider_) return {true, ""};
        return provider_->send(msg, at);
    };
    auto outcomes = outbox_.dispatch(now, send);
    for (const auto& o : outcomes) {
        const auto& msg = o.message;
        json d{{"message_id", msg.message_id},
               {"to", msg.to_address},
               {"body", msg.body},
               {"sender", msg.sender},
               {"attempt", msg.send_attempts}};
        switch (o.status) {
        case gateway::DispatchStatus::sent:
            d["status"] = "sent";
            ++stats_.messages_sent;
            break;
        case gateway::DispatchStatus::retry:
            d["status"] = "retry";
            d["error"] = o.error;
            d["retry_at"] = format_rfc3339(*o.retry_at);
            ++stats_.send_failures;
            break;
        case gateway::DispatchStatus::failed:
            d["status"] = "failed";
            d["error"] = o.error;
            ++stats_.send_failures;
            break;
        }
        audit(AuditKind::message_out, msg.participant_id, now, std::move(d));
        if (store_ && o.status != gateway::DispatchStatus::retry) store_->put(gateway::stored(msg));
        if (o.status == gateway::DispatchStatus::failed && !msg.participant_id.empty()) {
            auto it = machines_.find(msg.participant_id);
            notify(msg.participant_id, it == machines_.end() ? "" : it->second.study_id,
                   "message " + msg.message_id + " to " + msg.to_address + " undeliverable after " +
                       std::to_string(msg.send_attempts) + " attempts",
                   now);
        }
    }
}

void Engine::notify(const std::string& pid, const std::string& study_id, const std::string& reason, Instant now) {
    const auto& recipients = study_id.empty() ? options_.staff : studies_.at(study_id).staff;
    audit(AuditKind::notification, pid, now, {{"reason", reason}, {"study_id", study_id}, {"recipients", recipients}});
    ++stats_.notifications;
    const std::string text = pid.empty() ? reason : "Participant " + pid + ": " + reason;
    for (const auto& r : recipients) send_text(nullptr, r, text, now);
}

// ---------------------------------------------------------------- timers

void Engine::fire_timer(const sched::TimedEvent& e, Instant now) {
    ++stats_.timers_fired;
    audit(AuditKind::timer, e.participant_id, now,
          {{"action", "fired"}, {"timer_id", e.timer_id}, {"trigger", e.payload}, {"due_at", format_rfc3339(e.due_at)}});
    auto it = machines_.find(e.participant_id);
    if (it == machines_.end()) return;
    auto ev = make_event(EventKind::timer_fired, e.participant_id, e.payload, {}, now);
    dispatch(it->second, ev, now);
}

void Engine::tick() { begin(clock_->now()); }

std::optional<Instant> Engine::next_wakeup() const {
    const auto now = last_now_.value_or(clock_->now());
    auto a = scheduler_.next_due();
    auto b = outbox_.next_wakeup(now);
    if (a && b) return std::min(*a, *b);
    return a ? a : b;
}

void Engine::run_until(sched::VirtualClock& clock, Instant t) {
    int stalled = 0;
    while (true) {
        auto w = next_wakeup();
        if (!w || *w > t) break;
        const auto before = next_seq_;
        clock.set(std::max(*w, clock.now()));
        tick();
        if (next_seq_ == before && next_wakeup() == w) {
            if (++stalled > 3) throw std::logic_error("engine wakeup at " + format_rfc3339(*w) + " makes no progress");
        } else {
            stalled = 0;
        }
    }
    if (clock.now() < t) clock.set(t);
}

// ---------------------------------------------------------------- manual moves

TransitionOutcome Engine::manual_transition(const std::string& participant_id, const std::string& target_state,
                                            const std::string& actor, const std::string& reason) {
    auto it = machines_.find(participant_id);
    if (it == machines_.end()) throw UnknownParticipant("unknown participant '" + participant_id + "'");
    const auto& proto = study_of(it->second).pack->protocol;
    if (!proto.state_index(target_state)) {
        throw UnknownState("state '" + target_state + "' is not in protocol " + proto.protocol_id());
    }
    if (it->second.status == MachineStatus::withdrawn) {
        throw std::logic_error("participant '" + participant_id + "' is withdrawn");
    }
    const auto now = begin(clock_->now());
    auto out = do_manual(participant_id, target_state, actor, reason, now);
    dispatch_outbox(now);
    return out;
}

TransitionOutcome Engine::do_manual(const std::string& pid, const std::string& target, const std::string& actor,
                                    const std::string& reason, Instant now) {
    auto& m = machines_.at(pid);
    const auto& proto = study_of(m).pack->protocol;
    const auto from = *proto.state_index(m.current_state);
    const auto to = *proto.state_index(target);
    const dsl::CompiledTransition* via = nullptr;
    for (auto c : proto.candidates(from, dsl::trigger_key(dsl::ManualTrigger{}))) {
        if (proto.transitions()[c].to == to) {
            via = &proto.transitions()[c];
            break;
        }
    }

    TransitionOutcome out;
    out.result = TransitionOutcome::Result::applied;
    out.from_state = m.current_state;
    out.to_state = target;
    json detail{{"actor", actor}, {"reason", reason}, {"from", m.current_state}, {"to", target}};
    detail["transition"] = via ? json(via->index) : json();
    if (m.status == MachineStatus::completed && !proto.state(to).terminal) m.status = MachineStatus::active;

    if (via) {
        run_actions(m, proto.state(from).exit_actions, now);
        leave_timers(m, from);
        audit(AuditKind::manual, pid, now, std::move(detail));
        run_actions(m, via->actions, now);
        out.transition = via->index;
        out.actions_emitted = proto.state(from).exit_actions;
        out.actions_emitted.insert(out.actions_emitted.end(), via->actions.begin(), via->actions.end());
    } else {
        leave_timers(m, from);
        audit(AuditKind::manual, pid, now, std::move(detail));
    }
    ++stats_.manual_transitions;
    enter(m, to, now);
    const auto& entry = proto.state(to).entry_actions;
    out.actions_emitted.insert(out.actions_emitted.end(), entry.begin(), entry.end());
    return out;
}

void Engine::withdraw(const std::string& participant_id, const std::string& actor, const std::string& reason) {
    auto it = machines_.find(participant_id);
    if (it == machines_.end()) throw UnknownParticipant("unknown participant '" + participant_id + "'");
    if (it->second.status == MachineStatus::withdrawn) {
        throw std::logic_error("participant '" + participant_id + "' is already withdrawn");
    }
    const auto now = begin(clock_->now());
    do_withdraw(participant_id, actor, reason, now);
    dispatch_outbox(now);
}

void Engine::do_withdraw(const std::string& pid, const std::string& actor, const std::string& reason, Instant now) {
    auto& m = machines_.at(pid);
    m.status = MachineStatus::withdrawn;
    scheduler_.cancel_all(pid);
    if (auto it = open_sessions_.find(pid); it != open_sessions_.end()) {
        sessions_.erase(it->second);
        open_sessions_.erase(it);
    }
    audit(AuditKind::admin, pid, now,
          {{"op", "withdraw"}, {"actor", actor}, {"reason", reason}, {"state", m.current_state}});
}

void Engine::alert_staff(const std::string& reason) {
    const auto now = begin(clock_->now());
    audit(AuditKind::admin, "", now, {{"op", "alert"}, {"reason", reason}});
    notify("", "", reason, now);
    dispatch_outbox(now);
}

AuditRecord Engine::mark_snapshot(const json& detail) {
    auto now = clock_->now();
    if (last_now_ && now < *last_now_) now = *last_now_;
    last_now_ = now;
    return audit(AuditKind::snapshot_marker, "", now, detail);
}

// ---------------------------------------------------------------- queries

const Study& Engine::study(const std::string& id) const {
    auto it = studies_.find(id);
    if (it == studies_.end()) throw UnknownStudy("unknown study '" + id + "'");
    return it->second;
}

std::vector<const Study*> Engine::studies() const {
    std::vector<const Study*> out;
    for (const auto& [_, s] : studies_) out.push_back(&s);
    return out;
}

const ParticipantMachine& Engine::participant(const std::string& id) const {
    auto it = machines_.find(id);
    if (it == machines_.end()) throw UnknownParticipant("unknown participant '" + id + "'");
    return it->second;
}

const ParticipantMachine* Engine::find_participant(const std::string& id) const {
    auto it = machines_.find(id);
    return it == machines_.end() ? nullptr : &it->second;
}

std::vector<const ParticipantMachine*> Engine::participants(const std::string& study_id,
                                                            const std::string& state) const {
    std::vector<const ParticipantMachine*> out;
    for (const auto& [_, m] : machines_) {
        if (!study_id.empty() && m.study_id != study_id) continue;
        if (!state.empty() && m.current_state != state) continue;
        out.push_back(&m);
    }
    return out;
}

const convo::ConversationSession* Engine::open_session(const std::string& participant_id) const {
    auto it = open_sessions_.find(participant_id);
    return it == open_sessions_.end() ? nullptr : &sessions_.at(it->second);
}

std::vector<AuditRecord> Engine::audit_trail(const std::string& participant_id, std::optional<Instant> from,
                                             std::optional<Instant> to) const {
    if (!machines_.count(participant_id)) throw UnknownParticipant("unknown participant '" + participant_id + "'");
    std::vector<AuditRecord> out;
    auto it = audit_index_.find(participant_id);
    if (it == audit_index_.end()) return out;
    for (auto i : it->second) {
        const auto& r = audit_[i];
        if (from && r.timestamp < *from) continue;
        if (to && r.timestamp > *to) continue;
        out.push_back(r);
    }
    return out;
}

std::vector<AuditRecord> Engine::audit(const AuditFilter& f) const {
    std::vector<AuditRecord> out;
    if (f.participant_id) {
        auto it = audit_index_.find(*f.participant_id);
        if (it == audit_index_.end()) return out;
        for (auto i : it->second) {
            if (f.matches(audit_[i])) out.push_back(audit_[i]);
        }
        return out;
    }
    for (const auto& r : audit_) {
        if (f.matches(r)) out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------- snapshots

json Engine::encode() const {
    json studies = json::array();
    json hashes = json::object();
    for (const auto& [_, s] : studies_) {
        studies.push_back(study_json(s));
        hashes[s.pack->name] = s.pack->hash;
    }
    json machines = json::array();
    for (const auto& [_, m] : machines_) machines.push_back(to_json(m));
    json sessions = json::array();
    for (const auto& [_, s] : sessions_) sessions.push_back(convo::to_json(s));
    return {{"format_version", kSnapshotFormat},
            {"studies", std::move(studies)},
            {"pack_hashes", std::move(hashes)},
            {"participants", std::move(machines)},
            {"scheduler", scheduler_.encode()},
            {"outbox", outbox_.encode()},
            {"sessions", std::move(sessions)},
            {"counters",
             {{"next_seq", next_seq_},
              {"next_event", next_event_},
              {"next_study", next_study_},
              {"next_message", next_message_},
              {"next_session", next_session_}}},
            {"last_now", last_now_ ? json(format_rfc3339(*last_now_)) : json()},
            {"catch_up_pending", catch_up_pending_},
            {"stats", to_json(stats_)}};
}

void Engine::restore(const json& state, const PackResolver& packs) {
    if (state.at("format_version").get<int>() != kSnapshotFormat) {
        throw std::invalid_argument("unsupported snapshot format " + state.at("format_version").dump());
    }
    std::map<std::string, Study> studies;
    for (const auto& j : state.at("studies")) {
        const auto name = j.at("pack").get<std::string>();
        const auto want = j.at("pack_hash").get<std::string>();
        auto pack = packs ? packs(name) : nullptr;
        if (!pack) throw PackMismatch("protocol pack '" + name + "' is not available");
        if (pack->hash != want) {
            throw PackMismatch("protocol pack '" + name + "' changed since the snapshot (hash " + pack->hash +
                               ", snapshot has " + want + ")");
        }
        Study s;
        s.study_id = j.at("study_id");
        s.name = j.at("name");
        s.pack = std::move(pack);
        s.timezone = j.at("timezone");
        s.staff = j.at("staff").get<std::vector<std::string>>();
        s.status = j.at("status") == "active" ? StudyStatus::active : StudyStatus::closed;
        s.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
        studies[s.study_id] = std::move(s);
    }
    std::map<std::string, ParticipantMachine> machines;
    std::map<std::string, std::string> by_address;
    for (const auto& j : state.at("participants")) {
        auto m = machine_from_json(j);
        by_address[m.address] = m.participant_id;
        machines[m.participant_id] = std::move(m);
    }
    std::map<std::string, convo::ConversationSession> sessions;
    std::map<std::string, std::string> open;
    for (const auto& j : state.at("sessions")) {
        auto s = convo::session_from_json(j);
        open[s.participant_id] = s.session_id;
        sessions[s.session_id] = std::move(s);
    }
    auto scheduler = sched::Scheduler::decode(state.at("scheduler"));
    gateway::Outbox outbox(options_.pool, options_.retry);
    outbox.restore(state.at("outbox"));

    studies_ = std::move(studies);
    machines_ = std::move(machines);
    by_address_ = std::move(by_address);
    sessions_ = std::move(sessions);
    open_sessions_ = std::move(open);
    scheduler_ = std::move(scheduler);
    outbox_ = std::move(outbox);
    const auto& c = state.at("counters");
    next_seq_ = c.at("next_seq");
    next_event_ = c.at("next_event");
    next_study_ = c.at("next_study");
    next_message_ = c.at("next_message");
    next_session_ = c.at("next_session");
    last_now_ = state.at("last_now").is_null() ? std::nullopt
                                               : std::optional(parse_rfc3339(state.at("last_now").get<std::string>()));
    snapshot_catch_up_ = state.at("catch_up_pending").get<bool>();
    catch_up_pending_ = true;
    stats_ = stats_from_json(state.at("stats"));
    audit_.clear();
    audit_index_.clear();
}

void Engine::load_history(std::vector<AuditRecord> records) {
    std::vector<AuditRecord> merged = std::move(records);
    merged.insert(merged.end(), audit_.begin(), audit_.end());
    audit_ = std::move(merged);
    audit_index_.clear();
    for (std::size_t i = 0; i < audit_.size(); ++i) {
        if (!audit_[i].participant_id.empty()) audit_index_[audit_[i].participant_id].push_back(i);
    }
}

void Engine::recover(const std::vector<AuditRecord>& tail, const PackResolver& packs) {
    if (tail.empty()) return;
    if (tail.front().seq != next_seq_) {
        throw ReplayDivergence("audit tail starts at seq " + std::to_string(tail.front().seq) + ", state expects " +
                               std::to_string(next_seq_));
    }
    catch_up_pending_ = snapshot_catch_up_;
    replay_ = &tail;
    replay_pos_ = 0;
    try {
        while (replay_) {
            const auto& r = (*replay_)[replay_pos_];
            const auto before = next_seq_;
            const auto t = r.timestamp;
            if (!is_input(r.kind)) {
                begin(t);
            } else {
                const auto& d = r.detail;
                switch (r.kind) {
                case AuditKind::registration:
                    begin(t);
                    do_register(d.at("study_id"), r.participant_id, d.at("address"), d.at("timezone"), t);
                    break;
                case AuditKind::message_in:
                    begin(t);
                    do_receive(gateway::inbound_from_json(d.at("message")), t);
                    break;
                case AuditKind::manual:
                    begin(t);
                    do_manual(r.participant_id, d.at("to"), d.at("actor"), d.at("reason"), t);
                    break;
                case AuditKind::admin: {
                    begin(t);
                    const auto op = d.at("op").get<std::string>();
                    if (op == "create_study") {
                        auto pack = packs ? packs(d.at("pack")) : nullptr;
                        if (!pack || pack->hash != d.at("pack_hash")) {
                            throw PackMismatch("protocol pack '" + d.at("pack").get<std::string>() +
                                               "' does not match the audit log");
                        }
                        StudyConfig cfg{d.at("name"), d.at("timezone"), d.at("staff").get<std::vector<std::string>>()};
                        do_create_study(d.at("study_id"), cfg, std::move(pack), t);
                    } else if (op == "close_study") {
                        studies_.at(d.at("study_id")).status = StudyStatus::closed;
                        audit(AuditKind::admin, "", t, {{"op", "close_study"}, {"study_id", d.at("study_id")}});
                    } else if (op == "alert") {
                        audit(AuditKind::admin, "", t, {{"op", "alert"}, {"reason", d.at("reason")}});
                        notify("", "", d.at("reason"), t);
                    } else if (op == "withdraw") {
                        do_withdraw(r.participant_id, d.at("actor"), d.at("reason"), t);
                    } else {
                        throw ReplayDivergence("unknown admin operation '" + op + "'");
                    }
                    break;
                }
                case AuditKind::snapshot_marker:
                    if (!last_now_ || t > *last_now_) last_now_ = t;
                    audit(AuditKind::snapshot_marker, "", t, d);
                    break;
                default: break;
                }
                if (replay_) dispatch_outbox(t);
            }
            if (replay_ && next_seq_ == before) {
                throw ReplayDivergence("audit record " + std::to_string(r.seq) + " (" +
                                       std::string(to_string(r.kind)) + ") is not reproduced on replay");
            }
        }
    } catch (...) {
        replay_ = nullptr;
        throw;
    }
    replay_ = nullptr;
    catch_up_pending_ = true;
}

// ---------------------------------------------------------------- trail replay

std::string replay(const std::vector<AuditRecord>& records, const dsl::CompiledProtocol& protocol) {
    std::optional<std::string> state;
    for (const auto& r : records) {
        switch (r.kind) {
        case AuditKind::registration:
            if (r.detail.at("protocol_version") != protocol.version_hash()) {
                throw std::invalid_argument("trail was recorded against protocol version " +
                                            r.detail.at("protocol_version").get<std::string>() + ", not " +
                                            protocol.version_hash());
            }
            state = r.detail.at("state").get<std::string>();
            break;
        case AuditKind::transition: {
            if (!state) throw std::invalid_argument("transition before registration");
            const auto from = r.detail.at("from").get<std::string>();
            const auto to = r.detail.at("to").get<std::string>();
            const auto idx = r.detail.at("transition").get<std::size_t>();
            if (from != *state) {
                throw std::invalid_argument("record " + std::to_string(r.seq) + " leaves " + from + " but the trail is in " +
                                            *state);
            }
            if (idx >= protocol.transitions().size() ||
                protocol.state(protocol.transitions()[idx].from).name != from ||
                protocol.state(protocol.transitions()[idx].to).name != to) {
                throw std::invalid_argument("record " + std::to_string(r.seq) + " is not a transition of the protocol");
            }
            state = to;
            break;
        }
        case AuditKind::manual: {
            if (!state) throw std::invalid_argument("manual move before registration");
            const auto to = r.detail.at("to").get<std::string>();
            if (!protocol.state_index(to)) throw std::invalid_argument("unknown state '" + to + "' in trail");
            state = to;
            break;
        }
        default: break;
        }
    }
    if (!state) throw std::invalid_argument("trail has no registration record");
    return *state;
}

} // namespace protoflow::runtime
