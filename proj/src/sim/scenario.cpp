#include "protoflow/sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "protoflow/common/text_config.hpp"
#include "protoflow/gateway/provider.hpp"
#include "protoflow/runtime/engine.hpp"
#include "protoflow/study/bindings.hpp"

namespace protoflow::sim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr Behavior kBehaviors[] = {Behavior::compliant, Behavior::short_window, Behavior::long_window,
                                   Behavior::ambiguous, Behavior::silent};

double fraction(const BehaviorMix& m, Behavior b) {
    switch (b) {
    case Behavior::compliant: return m.compliant;
    case Behavior::short_window: return m.short_window;
    case Behavior::long_window: return m.long_window;
    case Behavior::ambiguous: return m.ambiguous;
    case Behavior::silent: return m.silent;
    }
    return 0;
}

std::string clock_text(int minutes, std::mt19937_64& rng) {
    const int h24 = minutes / 60, m = minutes % 60;
    const int h12 = h24 % 12 == 0 ? 12 : h24 % 12;
    const bool pm = h24 >= 12;
    char buf[32];
    switch (rng() % 4) {
    case 0: std::snprintf(buf, sizeof buf, "%d:%02d%s", h12, m, pm ? "pm" : "am"); break;
    case 1: std::snprintf(buf, sizeof buf, "%d:%02d %s", h12, m, pm ? "PM" : "AM"); break;
    case 2: std::snprintf(buf, sizeof buf, "%d.%02d %s", h12, m, pm ? "p.m." : "a.m."); break;
    default:
        if (m == 0) {
            std::snprintf(buf, sizeof buf, "%d%s", h12, pm ? "pm" : "am");
        } else {
            std::snprintf(buf, sizeof buf, "%d%02d%s", h12, m, pm ? "pm" : "am");
        }
    }
    return buf;
}

std::string valid_body(bool start, int minutes, std::mt19937_64& rng) {
    static const char* starts[] = {"STARTCAL", "startcal", "Startcal", "STARTCAL"};
    static const char* ends[] = {"ENDCAL", "endcal", "Endcal", "ENDCAL"};
    return std::string(start ? starts[rng() % 4] : ends[rng() % 4]) + " " + clock_text(minutes, rng);
}

// The time without am/pm, or the keyword run into it.
std::string malformed_body(bool start, int minutes, std::mt19937_64& rng) {
    const int h12 = (minutes / 60) % 12 == 0 ? 12 : (minutes / 60) % 12;
    const std::string kw = start ? "startcal" : "endcal";
    switch (rng() % 4) {
    case 0: return kw + std::to_string(h12);
    case 1: return (start ? "STARTCAL " : "ENDCAL ") + std::to_string(h12);
    case 2: {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%d:%02d", h12, minutes % 60);
        return kw + " " + buf;
    }
    default: return kw + " at " + std::to_string(h12) + " o'clock";
    }
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string participant_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "sim-%03d", i + 1);
    return buf;
}

std::string address(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "+1555%07d", 2000000 + i);
    return buf;
}

// One day of one participant: STARTCAL then ENDCAL, each possibly preceded
// by a malformed try.
struct DayPlan {
    int start_minute = 0;
    int end_minute = 0;
};

DayPlan day_window(Behavior b, int jitter, std::mt19937_64& rng) {
    std::normal_distribution<double> start_dist(450.0, std::max(1, jitter));
    const int start = std::clamp(static_cast<int>(std::lround(start_dist(rng))), 300, 600);
    int length = 0;
    switch (b) {
    case Behavior::short_window: length = uniform(rng, 360, 530); break;
    case Behavior::long_window: length = uniform(rng, 670, 770); break;
    default: length = uniform(rng, 545, 655); break;
    }
    return {start, start + length};
}

void add_message(Plan& plan, const TimeZone& tz, absl::CivilDay day, int participant, bool start, int minute,
                 Duration delay, bool malformed_first, int jitter, std::mt19937_64& rng) {
    const Instant stated = tz.at(day, LocalTime{minute / 60, minute % 60});
    Instant at = stated + delay;
    if (malformed_first) {
        plan.messages.push_back({at, participant, malformed_body(start, minute, rng), true});
        at += std::chrono::minutes(uniform(rng, 2, std::max(2, jitter / 3)));
    }
    plan.messages.push_back({at, participant, valid_body(start, minute, rng), false});
}

Duration send_delay(int jitter, std::mt19937_64& rng) {
    return std::chrono::seconds(uniform(rng, 0, std::max(1, jitter / 3) * 60));
}

void sort_plan(Plan& plan) {
    std::stable_sort(plan.messages.begin(), plan.messages.end(), [](const auto& a, const auto& b) {
        return a.at != b.at ? a.at < b.at : a.participant < b.participant;
    });
}

} // namespace

std::string_view to_string(Behavior b) {
    switch (b) {
    case Behavior::compliant: return "compliant";
    case Behavior::short_window: return "short";
    case Behavior::long_window: return "long";
    case Behavior::ambiguous: return "ambiguous";
    case Behavior::silent: return "silent";
    }
    return "?";
}

void ScenarioConfig::validate() const {
    if (cohort_size < 0) throw ScenarioError("cohort_size must not be negative");
    if (duration_days < 0) throw ScenarioError("duration_days must not be negative");
    if (jitter_minutes < 0) throw ScenarioError("jitter_minutes must not be negative");
    if (ambiguous_probability < 0 || ambiguous_probability > 1) {
        throw ScenarioError("ambiguous probability must be within [0, 1]");
    }
    double sum = 0;
    for (auto b : kBehaviors) {
        const double f = fraction(mix, b);
        if (!(f >= 0 && f <= 1)) throw ScenarioError("mix fraction '" + std::string(to_string(b)) + "' is out of range");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ScenarioError("mix fractions sum to " + std::to_string(sum) + ", not 1");
    if (corpus) {
        if (corpus->messages < 0 || corpus->unrecognized < 0 || corpus->unrecognized > corpus->messages) {
            throw ScenarioError("corpus needs 0 <= unrecognized <= messages");
        }
        if (corpus->messages > corpus->unrecognized && cohort_size == 0) {
            throw ScenarioError("a corpus with valid messages needs a cohort");
        }
    }
    try {
        TimeZone::load(timezone);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(e.what());
    }
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
    ScenarioConfig c;
    auto num = [](const json& obj, const char* key, auto& out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_number()) throw ScenarioError(std::string("'") + key + "' must be a number");
        out = obj.at(key).get<std::remove_reference_t<decltype(out)>>();
    };
    try {
        const json s = j.value("scenario", json::object());
        num(s, "seed", c.seed);
        num(s, "cohort_size", c.cohort_size);
        num(s, "duration_days", c.duration_days);
        num(s, "jitter_minutes", c.jitter_minutes);
        if (s.contains("start")) c.start = parse_rfc3339(s.at("start").get<std::string>());
        c.timezone = s.value("timezone", c.timezone);
        c.pack = s.value("pack", c.pack);
        if (j.contains("mix")) {
            const auto& m = j.at("mix");
            c.mix = BehaviorMix{0, 0, 0, 0, 0};
            for (const auto& [k, v] : m.items()) {
                if (!v.is_number()) throw ScenarioError("mix '" + k + "' must be a number");
                if (k == "compliant") c.mix.compliant = v;
                else if (k == "short") c.mix.short_window = v;
                else if (k == "long") c.mix.long_window = v;
                else if (k == "ambiguous") c.mix.ambiguous = v;
                else if (k == "silent") c.mix.silent = v;
                else throw ScenarioError("unknown behavior '" + k + "' in mix");
            }
        }
        if (j.contains("ambiguous")) num(j.at("ambiguous"), "probability", c.ambiguous_probability);
        if (j.contains("corpus")) {
            Corpus k;
            num(j.at("corpus"), "messages", k.messages);
            num(j.at("corpus"), "unrecognized", k.unrecognized);
            c.corpus = k;
        }
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& e) {
        throw ScenarioError(e.what());
    }
    c.validate();
    return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
    try {
        return from_json(load_text_config(path));
    } catch (const ConfigError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

json ScenarioConfig::to_json() const {
    json j{{"seed", seed},
           {"cohort_size", cohort_size},
           {"duration_days", duration_days},
           {"start", format_rfc3339(start)},
           {"timezone", timezone},
           {"pack", pack},
           {"jitter_minutes", jitter_minutes},
           {"ambiguous_probability", ambiguous_probability}};
    for (auto b : kBehaviors) j["mix"][std::string(to_string(b))] = fraction(mix, b);
    if (corpus) j["corpus"] = {{"messages", corpus->messages}, {"unrecognized", corpus->unrecognized}};
    return j;
}

std::vector<Behavior> assign_behaviors(const ScenarioConfig& cfg) {
    struct Share {
        Behavior b;
        int whole;
        double rest;
    };
    std::vector<Share> shares;
    int assigned = 0;
    for (auto b : kBehaviors) {
        const double exact = fraction(cfg.mix, b) * cfg.cohort_size;
        const int whole = static_cast<int>(std::floor(exact + 1e-9));
        shares.push_back({b, whole, exact - whole});
        assigned += whole;
    }
    auto order = shares;
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.rest > b.rest; });
    for (int i = 0; assigned < cfg.cohort_size; ++i, ++assigned) {
        for (auto& s : shares) {
            if (s.b == order[i % order.size()].b) ++s.whole;
        }
    }
    std::vector<Behavior> out;
    for (const auto& s : shares) out.insert(out.end(), s.whole, s.b);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

Plan plan_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    Plan plan;
    const auto tz = TimeZone::load(cfg.timezone);
    const auto first_day = tz.local_date(cfg.start);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    if (!cfg.corpus) {
        plan.behaviors = assign_behaviors(cfg);
        plan.days = cfg.duration_days;
        for (int d = 0; d < cfg.duration_days; ++d) {
            const auto day = first_day + d;
            for (int i = 0; i < cfg.cohort_size; ++i) {
                const auto b = plan.behaviors[i];
                if (b == Behavior::silent) continue;
                const auto w = day_window(b, cfg.jitter_minutes, rng);
                const double p = b == Behavior::ambiguous ? cfg.ambiguous_probability : 0.0;
                std::bernoulli_distribution garble(p);
                const bool g1 = garble(rng), g2 = garble(rng);
                add_message(plan, tz, day, i, true, w.start_minute, send_delay(cfg.jitter_minutes, rng), g1,
                            cfg.jitter_minutes, rng);
                add_message(plan, tz, day, i, false, w.end_minute, send_delay(cfg.jitter_minutes, rng), g2,
                            cfg.jitter_minutes, rng);
            }
        }
    } else {
        plan.behaviors.assign(cfg.cohort_size, Behavior::compliant);
        std::int64_t valid = cfg.corpus->messages - cfg.corpus->unrecognized;
        std::vector<std::size_t> valid_index;
        for (int d = 0; valid > 0; ++d) {
            const auto day = first_day + d;
            plan.days = d + 1;
            for (int i = 0; i < cfg.cohort_size && valid > 0; ++i) {
                const auto w = day_window(Behavior::compliant, cfg.jitter_minutes, rng);
                valid_index.push_back(plan.messages.size());
                add_message(plan, tz, day, i, true, w.start_minute, send_delay(cfg.jitter_minutes, rng), false, 0, rng);
                if (--valid == 0) break;
                valid_index.push_back(plan.messages.size());
                add_message(plan, tz, day, i, false, w.end_minute, send_delay(cfg.jitter_minutes, rng), false, 0, rng);
                --valid;
            }
        }
        // Plant each malformed message shortly before a valid one from the same sender.
        if (cfg.corpus->unrecognized > 0 && valid_index.empty()) {
            if (cfg.cohort_size == 0) throw ScenarioError("a corpus with unrecognized messages needs a cohort");
            plan.days = 1;
            for (std::int64_t k = 0; k < cfg.corpus->unrecognized; ++k) {
                const int i = static_cast<int>(k % cfg.cohort_size);
                plan.messages.push_back({tz.at(first_day, {8, 0}) + std::chrono::seconds(k), i,
                                         malformed_body(true, 480, rng), true});
            }
        } else {
            const auto n = valid_index.size();
            for (std::int64_t k = 0; k < cfg.corpus->unrecognized; ++k) {
                const auto& target = plan.messages[valid_index[rng() % n]];
                const bool start = target.body[0] == 'S' || target.body[0] == 's';
                const auto lt = tz.local_time_of_day(target.at);
                plan.messages.push_back({target.at - std::chrono::seconds(uniform(rng, 1, 300)), target.participant,
                                         malformed_body(start, lt.minutes_since_midnight(), rng), true});
            }
        }
    }
    sort_plan(plan);
    plan.end = tz.at(first_day + plan.days, LocalTime{0, 0});
    return plan;
}

json metrics_from_audit(const std::vector<runtime::AuditRecord>& records, Instant as_of) {
    using runtime::AuditKind;
    std::int64_t participants = 0, messages_in = 0, messages_out = 0, send_failures = 0, escalations = 0,
                 timers_fired = 0, transitions = 0, rejections = 0;
    for (const auto& r : records) {
        switch (r.kind) {
        case AuditKind::registration: ++participants; break;
        case AuditKind::message_in: ++messages_in; break;
        case AuditKind::message_out:
            (r.detail.value("status", "") == "sent" ? messages_out : send_failures)++;
            break;
        case AuditKind::notification: ++escalations; break;
        case AuditKind::timer: timers_fired += r.detail.value("action", "") == "fired"; break;
        case AuditKind::transition: ++transitions; break;
        case AuditKind::rejection: ++rejections; break;
        default: break;
        }
    }
    std::vector<study::ParticipantTally> tallies;
    for (auto& [pid, t] : study::recount(records)) tallies.push_back(std::move(t));
    auto j = study::to_json(study::aggregate_metrics(tallies, as_of));
    j["participants"] = participants;
    j["messages_in"] = messages_in;
    j["messages_out"] = messages_out;
    j["send_failures"] = send_failures;
    j["escalations"] = escalations;
    j["timers_fired"] = timers_fired;
    j["transitions"] = transitions;
    j["rejections"] = rejections;
    return j;
}

namespace {

json engine_metrics(const runtime::Engine& engine, Instant as_of) {
    std::vector<study::ParticipantTally> tallies;
    for (const auto* m : engine.participants()) tallies.push_back(study::tally(*m));
    auto j = study::to_json(study::aggregate_metrics(tallies, as_of));
    const auto& s = engine.stats();
    j["participants"] = tallies.size();
    j["messages_in"] = s.messages_in;
    j["messages_out"] = s.messages_sent;
    j["send_failures"] = s.send_failures;
    j["escalations"] = s.notifications;
    j["timers_fired"] = s.timers_fired;
    j["transitions"] = s.transitions + s.manual_transitions;
    j["rejections"] = s.rejections;
    return j;
}

} // namespace

runtime::EngineOptions engine_options() {
    runtime::EngineOptions o;
    o.pool.numbers = {"+15550000001", "+15550000002", "+15550000003"};
    o.staff = {"+15559990000"};
    return o;
}

namespace {

// Engine plus whatever a restart would lose.
struct Instance {
    gateway::SimGateway sms;
    std::unique_ptr<persist::AuditLog> log;
    std::unique_ptr<persist::SnapshotStore> snapshots;
    std::unique_ptr<runtime::Engine> engine;
};

} // namespace

json run_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
    const auto plan = plan_scenario(cfg);
    if (!opts.kill_after.empty() && opts.data_dir.empty()) throw ScenarioError("kill points need a data directory");

    sched::VirtualClock clock(cfg.start);
    auto bindings = study::default_bindings();
    std::shared_ptr<const runtime::Pack> pack;
    if (cfg.cohort_size > 0) {
        pack = runtime::load_pack(opts.packs_dir + "/" + cfg.pack,
                                  [bindings](const std::string& i) { return bindings->guards(i); });
    }
    runtime::PackResolver resolver = [&](const std::string& name) {
        return name == cfg.pack ? pack : nullptr;
    };

    const bool persisted = !opts.data_dir.empty();
    auto open = [&](bool recover) {
        auto inst = std::make_unique<Instance>();
        inst->engine = std::make_unique<runtime::Engine>(engine_options(), clock, bindings);
        inst->engine->set_provider(&inst->sms);
        if (persisted) {
            inst->log = std::make_unique<persist::AuditLog>(opts.data_dir + "/audit");
            inst->log->set_fsync(opts.fsync);
            inst->snapshots = std::make_unique<persist::SnapshotStore>(opts.data_dir + "/snapshots", opts.snapshots);
            inst->snapshots->set_fsync(opts.fsync);
            if (recover) persist::recover_engine(*inst->engine, *inst->snapshots, *inst->log, resolver);
            inst->engine->set_audit_sink(inst->log.get());
        }
        return inst;
    };
    if (persisted) fs::create_directories(opts.data_dir);
    auto inst = open(false);

    std::string study_id;
    if (cfg.cohort_size > 0) {
        study_id = inst->engine->create_study({cfg.pack + " scenario", cfg.timezone, {"+15559990001"}}, pack).study_id;
        for (int i = 0; i < cfg.cohort_size; ++i) {
            inst->engine->register_participant(study_id, participant_id(i), address(i));
        }
    }

    // Snapshots fall on a fixed grid so a restarted run takes the same ones.
    Instant next_snapshot = cfg.start + opts.snapshots.interval;
    auto settle = [&](Instant t) {
        while (persisted && next_snapshot <= t) {
            inst->engine->run_until(clock, next_snapshot);
            persist::take_snapshot(*inst->engine, *inst->snapshots, *inst->log, clock.now());
            next_snapshot += opts.snapshots.interval;
        }
        inst->engine->run_until(clock, t);
        if (persisted) inst->log->flush();
    };

    std::set<std::size_t> kills(opts.kill_after.begin(), opts.kill_after.end());
    int restarts = 0;
    for (std::size_t k = 0; k < plan.messages.size(); ++k) {
        const auto& pm = plan.messages[k];
        settle(pm.at);
        gateway::InboundMessage msg;
        msg.from_address = address(pm.participant);
        msg.body = pm.body;
        msg.received_at = clock.now();
        inst->engine->receive(std::move(msg));
        if (persisted) inst->log->flush();
        if (kills.count(k + 1)) {
            inst.reset();
            inst = open(true);
            ++restarts;
        }
    }
    settle(plan.end);
    if (persisted) persist::take_snapshot(*inst->engine, *inst->snapshots, *inst->log, clock.now());

    json cohort = json::object();
    for (auto b : kBehaviors) cohort[std::string(to_string(b))] = 0;
    for (auto b : plan.behaviors) cohort[std::string(to_string(b))] = cohort[std::string(to_string(b))].get<int>() + 1;
    std::int64_t malformed = 0;
    for (const auto& pm : plan.messages) malformed += pm.malformed;

    json report;
    report["scenario"] = cfg.to_json();
    report["cohort"] = cohort;
    report["days"] = plan.days;
    report["as_of"] = format_rfc3339(plan.end);
    report["planned_messages"] = plan.messages.size();
    report["planted_unrecognized"] = malformed;
    report["metrics"] = engine_metrics(*inst->engine, plan.end);
    report["recount"] = metrics_from_audit(inst->engine->audit_log(), plan.end);
    report["recount_matches"] = report["metrics"] == report["recount"];
    if (restarts > 0) report["restarts"] = restarts;
    if (opts.inspect) opts.inspect(*inst->engine);
    return report;
}

json replay_scenario(const std::string& audit_dir) {
    if (!fs::is_directory(audit_dir)) throw ScenarioError("no audit directory '" + audit_dir + "'");
    auto records = persist::AuditLog::read_dir(audit_dir);
    json report;
    if (records.empty()) {
        report["records"] = 0;
        report["metrics"] = metrics_from_audit({}, Instant{});
        return report;
    }
    const auto as_of = records.back().timestamp;
    report["records"] = records.size();
    report["as_of"] = format_rfc3339(as_of);
    report["metrics"] = metrics_from_audit(records, as_of);
    return report;
}

} // namespace protoflow::sim
