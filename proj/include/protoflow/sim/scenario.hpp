#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"
#include "protoflow/persist/snapshot.hpp"
#include "protoflow/runtime/audit.hpp"
#include "protoflow/runtime/engine.hpp"

namespace protoflow::sim {

class ScenarioError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Behavior { compliant, short_window, long_window, ambiguous, silent };

std::string_view to_string(Behavior b);

/// Fractions of the cohort; must sum to 1.
///
///   compliant  eating window of 9 to 11 hours every day
///   short      under 9 hours
///   long       over 11 hours
///   ambiguous  compliant, but a message is sometimes sent without am/pm
///              first ("startcal7") and corrected a few minutes later
///   silent     never writes
struct BehaviorMix {
    double compliant = 1.0;
    double short_window = 0.0;
    double long_window = 0.0;
    double ambiguous = 0.0;
    double silent = 0.0;
};

/// A fixed inbound stream instead of daily behavior: `messages` in total,
/// exactly `unrecognized` of them malformed. Days run until the valid
/// messages are used up.
struct Corpus {
    std::int64_t messages = 0;
    std::int64_t unrecognized = 0;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    int cohort_size = 163;
    int duration_days = 30;
    Instant start = parse_rfc3339("2021-09-09T04:00:00Z");  // everyone registers here
    std::string timezone = "America/New_York";
    std::string pack = "tre";
    BehaviorMix mix;
    double ambiguous_probability = 0.5;  // per message, ambiguous senders only
    int jitter_minutes = 30;             // spread of start times and of send delays
    std::optional<Corpus> corpus;

    /// Throws ScenarioError.
    void validate() const;

    static ScenarioConfig from_json(const nlohmann::json& j);
    /// The text config format; see scenarios/ for an annotated example.
    static ScenarioConfig load(const std::string& path);
    nlohmann::json to_json() const;
};

/// Largest-remainder split of the cohort, then shuffled by seed.
std::vector<Behavior> assign_behaviors(const ScenarioConfig& cfg);

struct PlannedMessage {
    Instant at{};
    int participant = 0;
    std::string body;
    bool malformed = false;
};

struct Plan {
    std::vector<Behavior> behaviors;
    std::vector<PlannedMessage> messages;  // time order
    int days = 0;
    Instant end{};  // report time, midnight after the last day
};

Plan plan_scenario(const ScenarioConfig& cfg);

struct RunOptions {
    std::string packs_dir;
    /// Audit segments and snapshots go here; empty keeps everything in memory.
    std::string data_dir;
    persist::SnapshotPolicy snapshots;
    /// Flush to the OS without fsync. A simulated crash only loses the
    /// process, so this keeps many kill/restore runs fast.
    bool fsync = true;
    /// Drop the engine after this many planned messages and recover a new
    /// one from data_dir, as after a crash. Needs data_dir.
    std::vector<std::size_t> kill_after;
    /// Called with the final engine before the report is returned.
    std::function<void(const runtime::Engine&)> inspect;
};

/// Number pool and staff list of simulated engines.
runtime::EngineOptions engine_options();

/// Deterministic for a given config: the same config gives a byte-identical
/// report. "metrics" comes from the engine, "recount" from its audit log.
nlohmann::json run_scenario(const ScenarioConfig& cfg, const RunOptions& opts);

/// The report's metrics block rebuilt from audit records alone.
nlohmann::json metrics_from_audit(const std::vector<runtime::AuditRecord>& records, Instant as_of);

/// Metrics of a finished run read back from its audit directory, as of the
/// last record (a run ends with a snapshot at its end time). Throws
/// persist::AuditCorruption naming the damaged segment.
nlohmann::json replay_scenario(const std::string& audit_dir);

} // namespace protoflow::sim
