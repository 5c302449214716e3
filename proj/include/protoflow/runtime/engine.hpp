#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/convo/emr.hpp"
#include "protoflow/convo/session.hpp"
#include "protoflow/gateway/message_store.hpp"
#include "protoflow/gateway/outbox.hpp"
#include "protoflow/gateway/provider.hpp"
#include "protoflow/runtime/audit.hpp"
#include "protoflow/runtime/bindings.hpp"
#include "protoflow/runtime/machine.hpp"
#include "protoflow/sched/clock.hpp"
#include "protoflow/sched/scheduler.hpp"

namespace protoflow::runtime {

class UnknownStudy : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class UnknownParticipant : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class DuplicateParticipant : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnknownState : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A snapshot names a pack whose contents no longer hash the same.
class PackMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Re-executing the audit tail produced a record different from the logged one.
class ReplayDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kSnapshotFormat = 1;

struct EngineOptions {
    gateway::NumberPool pool;
    gateway::RetryPolicy retry;
    std::vector<std::string> staff;  // notified about dead letters
};

struct ReceiveOutcome {
    std::string message_id;
    std::string participant_id;  // empty for dead letters
    bool dead_letter = false;
    /// transition | session | rejected | ignored
    std::string handled_by;
    std::optional<TransitionOutcome> transition;
    std::optional<convo::AnswerOutcome::Kind> answer;
};

nlohmann::json to_json(const ReceiveOutcome& o);

struct EngineStats {
    std::int64_t messages_in = 0;
    std::int64_t dead_letters = 0;
    std::int64_t unrecognized = 0;
    std::int64_t messages_sent = 0;
    std::int64_t send_failures = 0;  // attempts that failed, retried or not
    std::int64_t transitions = 0;
    std::int64_t rejections = 0;
    std::int64_t manual_transitions = 0;
    std::int64_t notifications = 0;
    std::int64_t timers_fired = 0;
    std::int64_t tool_calls = 0;

    bool operator==(const EngineStats&) const = default;
};

nlohmann::json to_json(const EngineStats& s);
EngineStats stats_from_json(const nlohmann::json& j);

/// Hosts one state machine per participant across any number of studies.
///
/// Not thread-safe: exactly one caller drives it (see admin::EngineHost).
/// Every entry point first fires timers that are due, then does its work,
/// then hands whatever may leave to the outbox.
///
/// A transition runs, in order: exit actions of the source, disarms the
/// source's after/at timers, merges the event payload into the context,
/// writes the transition record, runs the transition's actions, enters the
/// target, runs its entry actions and arms its timers. A self-loop leaves and
/// re-enters its state.
class Engine {
public:
    Engine(EngineOptions options, const sched::Clock& clock, std::shared_ptr<const BindingsRegistry> bindings);

    void set_provider(gateway::Provider* p) { provider_ = p; }
    void set_backend(convo::LlmBackend* b) { backend_ = b; }
    void set_emr(const convo::EmrStore* emr) { emr_ = emr; }
    void set_audit_sink(AuditSink* sink) { sink_ = sink; }
    void set_message_store(gateway::MessageStore* store) { store_ = store; }
    convo::ValidatorRegistry& validators() { return validators_; }

    const Study& create_study(const StudyConfig& cfg, std::shared_ptr<const Pack> pack);
    void close_study(const std::string& study_id);

    /// Throws UnknownStudy, DuplicateParticipant (id or address already in
    /// use) or std::invalid_argument for a bad address or time zone.
    const ParticipantMachine& register_participant(const std::string& study_id, const std::string& participant_id,
                                                   const std::string& address, const std::string& timezone = "");

    /// Routes one inbound message. Unknown or malformed senders are dead-lettered.
    ReceiveOutcome receive(gateway::InboundMessage msg);

    /// Moves a participant regardless of the transition table. A `manual`
    /// transition from the current state to the target runs with its actions;
    /// otherwise only the target's entry actions run. Throws UnknownParticipant
    /// or UnknownState.
    TransitionOutcome manual_transition(const std::string& participant_id, const std::string& target_state,
                                        const std::string& actor, const std::string& reason);

    void withdraw(const std::string& participant_id, const std::string& actor, const std::string& reason);

    /// Fires due timers and dispatches the outbox at clock.now().
    void tick();

    /// Earliest instant at which tick() has work.
    std::optional<Instant> next_wakeup() const;

    /// Steps a virtual clock through every wakeup up to `t`, ticking at each.
    void run_until(sched::VirtualClock& clock, Instant t);

    /// Operational problem (storage, provider) for the engine staff list.
    void alert_staff(const std::string& reason);

    /// Appends a snapshot marker; its seq follows the state it describes.
    AuditRecord mark_snapshot(const nlohmann::json& detail);

    const Study& study(const std::string& id) const;
    std::vector<const Study*> studies() const;
    const ParticipantMachine& participant(const std::string& id) const;
    const ParticipantMachine* find_participant(const std::string& id) const;
    std::vector<const ParticipantMachine*> participants(const std::string& study_id = "",
                                                        const std::string& state = "") const;
    const convo::ConversationSession* open_session(const std::string& participant_id) const;
    const std::map<std::string, convo::ConversationSession>& sessions() const { return sessions_; }

    /// Records for one participant in seq order. Throws UnknownParticipant.
    std::vector<AuditRecord> audit_trail(const std::string& participant_id, std::optional<Instant> from = std::nullopt,
                                         std::optional<Instant> to = std::nullopt) const;
    std::vector<AuditRecord> audit(const AuditFilter& f = {}) const;
    const std::vector<AuditRecord>& audit_log() const { return audit_; }
    std::uint64_t next_seq() const { return next_seq_; }

    const EngineStats& stats() const { return stats_; }
    const sched::Scheduler& scheduler() const { return scheduler_; }
    const gateway::Outbox& outbox() const { return outbox_; }
    const BindingsRegistry& bindings() const { return *bindings_; }
    std::optional<Instant> last_now() const { return last_now_; }

    /// Full state as canonical JSON: studies, machines, timers, pending
    /// sends, sessions, counters and pack hashes. The audit log is not part
    /// of it.
    nlohmann::json encode() const;

    /// Rebuilds state from encode() output. Throws PackMismatch when a pack
    /// resolves to a different hash. Timers that fell due meanwhile fire once
    /// on the first tick.
    void restore(const nlohmann::json& state, const PackResolver& packs);

    /// Records that precede the restored state, kept for audit queries.
    void load_history(std::vector<AuditRecord> records);

    /// Re-executes audit records written after the restored state, checking
    /// each regenerated record against the log; provider and language-model
    /// results are taken from the log instead of being requested again.
    /// Throws ReplayDivergence.
    void recover(const std::vector<AuditRecord>& tail, const PackResolver& packs);

private:
    Instant begin(Instant now);
    void advance(Instant now);
    void dispatch_outbox(Instant now);

    AuditRecord& audit(AuditKind kind, const std::string& pid, Instant now, nlohmann::json detail);
    const AuditRecord* expected() const;

    const Study& study_of(const ParticipantMachine& m) const;
    const HostBindings& bindings_of(const Study& s) const;
    TimeZone tz_of(const ParticipantMachine& m) const;

    const ParticipantMachine& do_register(const std::string& study_id, const std::string& pid,
                                          const std::string& address, const std::string& timezone, Instant now);
    ReceiveOutcome do_receive(gateway::InboundMessage msg, Instant now);
    TransitionOutcome do_manual(const std::string& pid, const std::string& target, const std::string& actor,
                                const std::string& reason, Instant now);
    void do_withdraw(const std::string& pid, const std::string& actor, const std::string& reason, Instant now);
    const Study& do_create_study(const std::string& id, const StudyConfig& cfg, std::shared_ptr<const Pack> pack,
                                 Instant now);

    TransitionOutcome dispatch(ParticipantMachine& m, const EngineEvent& ev, Instant now);
    void apply(ParticipantMachine& m, const dsl::CompiledTransition& t, const EngineEvent& ev, Instant now,
               TransitionOutcome& out);
    void enter(ParticipantMachine& m, std::size_t state, Instant now);
    void leave_timers(ParticipantMachine& m, std::size_t state);
    void run_actions(ParticipantMachine& m, const std::vector<dsl::ActionSpec>& actions, Instant now);
    void send_template(ParticipantMachine& m, const std::string& template_id, Instant now);
    void send_text(ParticipantMachine* m, const std::string& to, const std::string& body, Instant now);
    void notify(const std::string& pid, const std::string& study_id, const std::string& reason, Instant now);
    void fire_timer(const sched::TimedEvent& e, Instant now);
    void answer(ParticipantMachine& m, convo::ConversationSession& s, const gateway::InboundMessage& msg, Instant now,
                ReceiveOutcome& out);
    EngineEvent make_event(EventKind kind, const std::string& pid, std::string trigger, Context payload, Instant now);

    EngineOptions options_;
    const sched::Clock* clock_;
    std::shared_ptr<const BindingsRegistry> bindings_;
    gateway::Provider* provider_ = nullptr;
    convo::LlmBackend* backend_ = nullptr;
    const convo::EmrStore* emr_ = nullptr;
    AuditSink* sink_ = nullptr;
    gateway::MessageStore* store_ = nullptr;
    convo::ValidatorRegistry validators_;

    std::map<std::string, Study> studies_;
    std::map<std::string, ParticipantMachine> machines_;
    std::map<std::string, std::string> by_address_;
    sched::Scheduler scheduler_;
    gateway::Outbox outbox_;
    std::map<std::string, convo::ConversationSession> sessions_;
    std::map<std::string, std::string> open_sessions_;  // participant -> session

    std::vector<AuditRecord> audit_;
    std::map<std::string, std::vector<std::size_t>> audit_index_;
    std::uint64_t next_seq_ = 1;
    std::uint64_t next_event_ = 1;
    std::uint64_t next_study_ = 1;
    std::uint64_t next_message_ = 1;
    std::uint64_t next_session_ = 1;
    std::optional<Instant> last_now_;
    bool catch_up_pending_ = false;
    bool snapshot_catch_up_ = false;
    EngineStats stats_;

    const std::vector<AuditRecord>* replay_ = nullptr;
    std::size_t replay_pos_ = 0;
};

/// State reached by re-applying a participant's registration, transition
/// and manual records. Throws std::invalid_argument when the trail names a
/// different protocol version or does not follow the protocol.
std::string replay(const std::vector<AuditRecord>& records, const dsl::CompiledProtocol& protocol);

} // namespace protoflow::runtime
