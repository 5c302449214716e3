#include "protoflow/admin/host.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "protoflow/study/bindings.hpp"

namespace protoflow::admin {

namespace fs = std::filesystem;

namespace {

runtime::EngineOptions engine_options(const AdminConfig& cfg) {
    runtime::EngineOptions o;
    o.pool = cfg.pool;
    o.staff = cfg.staff;
    if (cfg.gateway_mode == GatewayMode::http) {
        if (auto env = gateway::HttpProviderConfig::from_env(); env && !env->numbers.empty()) o.pool.numbers = env->numbers;
    }
    return o;
}

std::string ensure_dir(const std::string& d) {
    fs::create_directories(d);
    return d;
}

} // namespace

EngineHost::EngineHost(AdminConfig cfg, const sched::Clock& clock,
                       std::shared_ptr<const runtime::BindingsRegistry> bindings)
    : cfg_(std::move(cfg)),
      clock_(&clock),
      bindings_(bindings ? std::move(bindings) : study::default_bindings()),
      log_(ensure_dir(cfg_.data_dir) + "/audit"),
      snapshots_(cfg_.data_dir + "/snapshots", cfg_.snapshot),
      messages_(cfg_.data_dir + "/messages.jsonl"),
      blobs_(cfg_.data_dir + "/blobs"),
      engine_(engine_options(cfg_), clock, bindings_) {
    if (cfg_.gateway_mode == GatewayMode::sim) {
        sim_ = std::make_unique<gateway::SimGateway>();
        engine_.set_provider(sim_.get());
    } else {
        auto env = gateway::HttpProviderConfig::from_env();
        if (!env) throw std::invalid_argument("gateway mode http needs PF_SMS_ACCOUNT, PF_SMS_TOKEN and PF_SMS_NUMBERS");
        http_provider_ = std::make_unique<gateway::HttpProvider>(*env);
        engine_.set_provider(http_provider_.get());
    }
    if (!cfg_.llm_endpoint.empty()) {
        const char* key = std::getenv("PF_LLM_KEY");
        backend_ = std::make_unique<convo::HttpLlmBackend>(
            convo::HttpBackendConfig{cfg_.llm_endpoint, cfg_.llm_model, key ? key : ""});
        engine_.set_backend(backend_.get());
    } else if (auto env = convo::HttpBackendConfig::from_env()) {
        backend_ = std::make_unique<convo::HttpLlmBackend>(*env);
        engine_.set_backend(backend_.get());
    }
    if (!cfg_.emr_file.empty()) emr_ = convo::EmrStore::load(cfg_.emr_file);
    engine_.set_emr(&emr_);

    recovery_ = persist::recover_engine(engine_, snapshots_, log_, resolver());
    engine_.set_audit_sink(&log_);
    engine_.set_message_store(&messages_);
    last_snapshot_ = clock_->now();
}

EngineHost::~EngineHost() { stop(); }

void EngineHost::after_call() {
    try {
        log_.flush();
    } catch (const std::exception& e) {
        // The records are still in memory; say so once rather than on every call.
        if (!storage_alerted_) {
            storage_alerted_ = true;
            engine_.alert_staff(std::string("audit storage failing: ") + e.what());
        }
    }
}

std::shared_ptr<const runtime::Pack> EngineHost::pack(const std::string& name) {
    if (name.empty() || name.find_first_of("/\\") != std::string::npos || name[0] == '.') {
        throw runtime::PackError("bad pack name '" + name + "'");
    }
    std::lock_guard lock(packs_mu_);
    auto& p = packs_[name];
    if (!p) {
        const auto dir = cfg_.studies_dir + "/" + name;
        if (!fs::is_directory(dir)) {
            packs_.erase(name);
            throw runtime::PackError("no protocol pack '" + name + "' in " + cfg_.studies_dir);
        }
        auto b = bindings_;
        try {
            p = runtime::load_pack(dir, [b](const std::string& i) { return b->guards(i); });
        } catch (...) {
            packs_.erase(name);
            throw;
        }
    }
    return p;
}

runtime::PackResolver EngineHost::resolver() {
    return [this](const std::string& name) -> std::shared_ptr<const runtime::Pack> {
        try {
            return pack(name);
        } catch (const std::exception&) {
            return nullptr;
        }
    };
}

persist::SnapshotInfo EngineHost::snapshot_locked() {
    auto info = persist::take_snapshot(engine_, snapshots_, log_, clock_->now());
    last_snapshot_ = clock_->now();
    return info;
}

persist::SnapshotInfo EngineHost::snapshot_now() {
    std::lock_guard lock(mu_);
    return snapshot_locked();
}

void EngineHost::maintain() {
    std::lock_guard lock(mu_);
    engine_.tick();
    if (clock_->now() - last_snapshot_ >= cfg_.snapshot.interval) {
        try {
            snapshot_locked();
            storage_alerted_ = false;
        } catch (const std::exception& e) {
            last_snapshot_ = clock_->now();  // try again next interval, not every tick
            engine_.alert_staff(std::string("snapshot failed: ") + e.what());
        }
    }
    after_call();
}

void EngineHost::start() {
    if (ticker_.joinable()) return;
    stopping_ = false;
    ticker_ = std::thread([this] {
        std::unique_lock lock(stop_mu_);
        while (!stop_cv_.wait_for(lock, std::chrono::milliseconds(cfg_.tick_ms), [this] { return stopping_; })) {
            lock.unlock();
            try {
                maintain();
            } catch (const std::exception& e) {
                std::fprintf(stderr, "protoflow: tick failed: %s\n", e.what());
            }
            lock.lock();
        }
    });
}

void EngineHost::stop() {
    {
        std::lock_guard lock(stop_mu_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (ticker_.joinable()) ticker_.join();
}

} // namespace protoflow::admin
