#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"
#include "protoflow/persist/audit_log.hpp"
#include "protoflow/runtime/engine.hpp"

namespace protoflow::persist {

struct SnapshotPolicy {
    Duration interval = std::chrono::minutes(15);
    int retain = 8;
};

struct SnapshotInfo {
    std::uint64_t sequence = 0;
    std::string path;
    std::uint64_t bytes = 0;
};

struct LoadedSnapshot {
    SnapshotInfo info;
    nlohmann::json state;  // engine state plus sequence and taken_at
    std::vector<std::string> skipped;  // newer snapshots that could not be read, with the reason
};

/// Gzip-compressed canonical JSON snapshots in `<dir>/snap-<sequence>.json.gz`.
/// Each is written to a temporary file, synced and renamed into place, so a
/// crash leaves either the old or the new file, never a torn one.
class SnapshotStore {
public:
    explicit SnapshotStore(std::string dir, SnapshotPolicy policy = {});

    /// Adds sequence and taken_at to the engine state and writes it. Older
    /// snapshots beyond the retention count are removed.
    SnapshotInfo write(nlohmann::json state, Instant taken_at);

    std::vector<SnapshotInfo> list() const;  // oldest first
    /// Throws on an unreadable file.
    nlohmann::json load(const std::string& path) const;
    /// Newest readable snapshot, skipping damaged ones.
    std::optional<LoadedSnapshot> load_latest() const;

    /// See AuditLog::set_fsync.
    void set_fsync(bool on) { fsync_ = on; }

    const SnapshotPolicy& policy() const { return policy_; }
    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
    SnapshotPolicy policy_;
    bool fsync_ = true;
};

struct RecoveryReport {
    std::optional<SnapshotInfo> snapshot;
    std::vector<std::string> skipped_snapshots;
    std::size_t replayed = 0;  // audit records after the snapshot
    std::size_t history = 0;   // records before it, loaded for queries
};

/// Flushes the log, writes the engine state and appends the snapshot marker.
SnapshotInfo take_snapshot(runtime::Engine& engine, SnapshotStore& store, AuditLog& log, Instant now);

/// Newest readable snapshot, then the audit tail after it. Without any
/// snapshot the whole log is replayed into the fresh engine.
RecoveryReport recover_engine(runtime::Engine& engine, const SnapshotStore& snapshots, const AuditLog& log,
                              const runtime::PackResolver& packs);

} // namespace protoflow::persist
