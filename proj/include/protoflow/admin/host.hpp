#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "protoflow/admin/config.hpp"
#include "protoflow/convo/backend.hpp"
#include "protoflow/gateway/blob_store.hpp"
#include "protoflow/gateway/message_store.hpp"
#include "protoflow/gateway/provider.hpp"
#include "protoflow/persist/audit_log.hpp"
#include "protoflow/persist/snapshot.hpp"
#include "protoflow/runtime/engine.hpp"

namespace protoflow::admin {

/// Owns an engine and its storage. Construction recovers the engine from the
/// data directory. All engine access goes through run(), one call at a time;
/// the audit log is flushed after every call. start() adds a ticker that
/// fires due timers and takes snapshots on the configured interval.
class EngineHost {
public:
    EngineHost(AdminConfig cfg, const sched::Clock& clock,
               std::shared_ptr<const runtime::BindingsRegistry> bindings = nullptr);
    ~EngineHost();
    EngineHost(const EngineHost&) = delete;
    EngineHost& operator=(const EngineHost&) = delete;

    template <class F>
    auto run(F&& f) {
        std::lock_guard lock(mu_);
        struct Flush {
            EngineHost* h;
            ~Flush() { h->after_call(); }
        } flush{this};
        return f(engine_);
    }

    void start();
    void stop();

    /// Loads `<studies_dir>/<name>` once; names are plain directory names.
    std::shared_ptr<const runtime::Pack> pack(const std::string& name);
    runtime::PackResolver resolver();

    persist::SnapshotInfo snapshot_now();
    /// Ticks the engine and snapshots when the interval has passed.
    void maintain();

    const AdminConfig& config() const { return cfg_; }
    const persist::RecoveryReport& recovery() const { return recovery_; }
    const persist::AuditLog& audit_log() const { return log_; }
    const persist::SnapshotStore& snapshots() const { return snapshots_; }
    gateway::BlobStore& blobs() { return blobs_; }
    gateway::MessageStore& messages() { return messages_; }
    /// Null unless the gateway runs in sim mode.
    gateway::SimGateway* sim_gateway() { return sim_.get(); }
    const sched::Clock& clock() const { return *clock_; }

private:
    void after_call();
    persist::SnapshotInfo snapshot_locked();

    AdminConfig cfg_;
    const sched::Clock* clock_;
    std::shared_ptr<const runtime::BindingsRegistry> bindings_;
    persist::AuditLog log_;
    persist::SnapshotStore snapshots_;
    gateway::JsonlMessageStore messages_;
    gateway::BlobStore blobs_;
    std::unique_ptr<gateway::SimGateway> sim_;
    std::unique_ptr<gateway::Provider> http_provider_;
    std::unique_ptr<convo::LlmBackend> backend_;
    convo::EmrStore emr_;
    runtime::Engine engine_;
    persist::RecoveryReport recovery_;
    Instant last_snapshot_{};
    bool storage_alerted_ = false;

    std::mutex packs_mu_;
    std::map<std::string, std::shared_ptr<const runtime::Pack>> packs_;

    std::mutex mu_;
    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    std::thread ticker_;
};

} // namespace protoflow::admin
