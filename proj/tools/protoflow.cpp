// protoflow: compile packs, manage snapshots, run the simulator, serve the API.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "protoflow/admin/config.hpp"
#include "protoflow/admin/host.hpp"
#include "protoflow/admin/server.hpp"
#include "protoflow/dsl/dot.hpp"
#include "protoflow/dsl/parser.hpp"
#include "protoflow/dsl/validator.hpp"
#include "protoflow/persist/snapshot.hpp"
#include "protoflow/runtime/pack.hpp"
#include "protoflow/sched/clock.hpp"
#include "protoflow/sim/load.hpp"
#include "protoflow/sim/scenario.hpp"
#include "protoflow/study/bindings.hpp"

using namespace protoflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_out(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

int compile(const std::string& target, const std::string& dot, bool check) {
    const bool is_pack = fs::is_directory(target);
    const auto file = is_pack ? target + "/protocol.pfp" : target;
    const auto source = slurp(file);
    auto print = [&](const std::vector<dsl::CompileDiagnostic>& ds) {
        for (const auto& d : ds) std::cerr << dsl::format_diagnostic(file, d) << "\n";
    };

    auto parsed = dsl::parse_protocol(source);
    print(parsed.diagnostics);
    if (!parsed.ok()) return 1;
    const auto found = dsl::validate_graph(*parsed.graph);
    print(found);
    if (dsl::has_errors(found)) return 1;

    auto bindings = study::default_bindings();
    auto guards = [bindings](const std::string& i) { return bindings->guards(i); };
    std::shared_ptr<const runtime::Pack> pack;
    try {
        if (is_pack) {
            pack = runtime::load_pack(target, guards);
        } else {
            pack = runtime::make_pack(fs::path(file).stem().string(), source, "", "", guards);
        }
    } catch (const dsl::CompileError& e) {
        std::vector<dsl::CompileDiagnostic> errors;
        for (const auto& d : e.diagnostics()) {
            if (d.severity == dsl::Severity::error) errors.push_back(d);
        }
        print(errors);
        return 1;
    } catch (const runtime::PackError& e) {
        std::cerr << target << ": " << e.what() << "\n";
        return 1;
    }

    if (!dot.empty()) write_out(dot, dsl::export_dot(*parsed.graph));
    if (!check && dot != "-") {
        const auto& p = pack->protocol;
        std::cout << p.protocol_id() << ": " << p.states().size() << " states, " << p.transitions().size()
                  << " transitions\n"
                  << "version " << p.version_hash() << "\n";
        if (is_pack) std::cout << "pack    " << pack->hash << "\n";
    }
    return 0;
}

admin::AdminConfig load_config(const std::string& path) {
    try {
        return admin::AdminConfig::load(path);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

json recovery_json(const persist::RecoveryReport& r) {
    json j{{"history_records", r.history}, {"replayed_records", r.replayed}, {"skipped_snapshots", r.skipped_snapshots}};
    if (r.snapshot) j["snapshot"] = {{"sequence", r.snapshot->sequence}, {"path", r.snapshot->path}};
    return j;
}

int snapshot_take(const std::string& config) {
    sched::SystemClock clock;
    admin::EngineHost host(load_config(config), clock);
    auto info = host.snapshot_now();
    std::cout << json{{"sequence", info.sequence}, {"path", info.path}, {"bytes", info.bytes}}.dump(2) << "\n";
    return 0;
}

int snapshot_list(const std::string& config) {
    const auto cfg = load_config(config);
    persist::SnapshotStore store(cfg.data_dir + "/snapshots", cfg.snapshot);
    for (const auto& s : store.list()) {
        std::string taken = "?";
        try {
            taken = store.load(s.path).at("taken_at").get<std::string>();
        } catch (const std::exception& e) {
            taken = std::string("unreadable: ") + e.what();
        }
        std::cout << s.sequence << "\t" << s.bytes << "\t" << taken << "\t" << s.path << "\n";
    }
    return 0;
}

// Recovers the engine as the server would and checks that its state survives
// another encode/restore round.
int snapshot_restore(const std::string& config, const std::string& file) {
    const auto cfg = load_config(config);
    sched::SystemClock clock;
    if (!file.empty()) {
        admin::EngineHost host(cfg, clock);  // for its pack resolver
        persist::SnapshotStore store(cfg.data_dir + "/snapshots", cfg.snapshot);
        runtime::Engine engine({cfg.pool, {}, cfg.staff}, clock, study::default_bindings());
        auto state = store.load(file);
        engine.restore(state, host.resolver());
        std::cout << json{{"file", file},
                          {"sequence", state.at("sequence")},
                          {"taken_at", state.at("taken_at")},
                          {"participants", engine.participants().size()},
                          {"next_seq", engine.next_seq()}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    admin::EngineHost host(cfg, clock);
    const auto state = host.run([](runtime::Engine& e) { return e.encode(); });
    runtime::Engine again({cfg.pool, {}, cfg.staff}, clock, study::default_bindings());
    again.restore(state, host.resolver());
    const bool identical = again.encode() == state;
    auto j = recovery_json(host.recovery());
    j["participants"] = host.run([](runtime::Engine& e) { return e.participants().size(); });
    j["next_seq"] = state.at("counters").at("next_seq");
    j["round_trip_identical"] = identical;
    std::cout << j.dump(2) << "\n";
    return identical ? 0 : 1;
}

int serve(const std::string& config, int port_override) {
    auto cfg = load_config(config);
    if (port_override >= 0) cfg.port = port_override;

    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    sched::SystemClock clock;
    admin::EngineHost host(cfg, clock);
    const auto& rec = host.recovery();
    std::cerr << "recovered: " << recovery_json(rec).dump() << "\n";
    admin::AdminServer server(host);
    const int port = server.bind(cfg.bind, cfg.port);
    host.start();
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        server.stop();
    });
    std::cerr << "listening on " << cfg.bind << ":" << port << "\n";
    server.listen();
    host.stop();
    host.snapshot_now();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Protocol-driven study messaging"};
    app.require_subcommand(1);

    std::string target, dot;
    bool check = false;
    auto* c = app.add_subcommand("compile", "Compile a protocol pack directory or .pfp file");
    c->add_option("target", target, "pack directory or protocol file")->required();
    c->add_option("--dot", dot, "write the graph in DOT format to a file, or - for stdout");
    c->add_flag("--check", check, "diagnostics only");

    std::string config = "config/protoflow.toml";
    auto* snap = app.add_subcommand("snapshot", "Take, restore or list engine snapshots");
    snap->require_subcommand(1);
    snap->fallthrough();
    snap->add_option("--config", config, "server config file")->capture_default_str();
    auto* take = snap->add_subcommand("take", "Recover the engine, then write a snapshot");
    std::string restore_file;
    auto* restore = snap->add_subcommand("restore", "Recover the engine and verify a snapshot round trip");
    restore->add_option("--file", restore_file, "load only this snapshot file");
    auto* list = snap->add_subcommand("list", "List snapshots");

    std::string packs = "packs";
    auto* sim_cmd = app.add_subcommand("sim", "Simulated cohorts and load");
    sim_cmd->require_subcommand(1);
    sim_cmd->fallthrough();
    sim_cmd->add_option("--packs", packs, "protocol packs directory")->capture_default_str();

    std::string scenario, report, data_dir;
    auto* run = sim_cmd->add_subcommand("run", "Run a scenario");
    run->add_option("scenario", scenario, "scenario config")->required()->check(CLI::ExistingFile);
    run->add_option("--report", report, "write the report here instead of stdout");
    run->add_option("--data", data_dir, "keep the audit log and snapshots in this directory");

    sim::LoadOptions load_opts;
    auto* load = sim_cmd->add_subcommand("load", "Offer inbound messages to a live server at a fixed rate");
    load->add_option("--rate", load_opts.rate, "messages per second")->capture_default_str();
    load->add_option("--secs", load_opts.seconds, "duration in seconds")->capture_default_str();
    load->add_option("--producers", load_opts.producers, "concurrent senders")->capture_default_str();
    load->add_option("--cohort", load_opts.cohort, "participants")->capture_default_str();

    int burst_count = 250, burst_pool = 1;
    auto* burst = sim_cmd->add_subcommand("burst", "Drain an outbound burst through the rate limiter");
    burst->add_option("--count", burst_count, "messages")->capture_default_str();
    burst->add_option("--pool", burst_pool, "sender numbers")->capture_default_str();

    std::string audit_dir;
    auto* replay = sim_cmd->add_subcommand("replay", "Recompute a run's metrics from its audit log");
    replay->add_option("audit_dir", audit_dir, "audit segment directory")->required();

    int port = -1;
    auto* serve_cmd = app.add_subcommand("serve", "Run the admin API");
    serve_cmd->add_option("--config", config, "server config file")->capture_default_str();
    serve_cmd->add_option("--port", port, "override the configured port");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed()) return compile(target, dot, check);
        if (take->parsed()) return snapshot_take(config);
        if (restore->parsed()) return snapshot_restore(config, restore_file);
        if (list->parsed()) return snapshot_list(config);
        if (run->parsed()) {
            auto cfg = sim::ScenarioConfig::load(scenario);
            sim::RunOptions opts;
            opts.packs_dir = packs;
            opts.data_dir = data_dir;
            const auto t0 = std::chrono::steady_clock::now();
            auto r = sim::run_scenario(cfg, opts);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_out(report, r.dump(2) + "\n");
            std::fprintf(stderr, "success_rate %.4f  error_rate %.4f  recount %s  (%.2fs)\n",
                         r["metrics"]["success_rate"].get<double>(), r["metrics"]["error_rate"].get<double>(),
                         r["recount_matches"].get<bool>() ? "matches" : "DIFFERS", secs);
            return r["recount_matches"].get<bool>() ? 0 : 1;
        }
        if (load->parsed()) {
            load_opts.packs_dir = packs;
            auto r = sim::load_test(load_opts);
            std::cout << r.dump(2) << "\n";
            return 0;
        }
        if (burst->parsed()) {
            std::cout << sim::outbound_burst(burst_count, burst_pool).dump(2) << "\n";
            return 0;
        }
        if (replay->parsed()) {
            std::cout << sim::replay_scenario(audit_dir).dump(2) << "\n";
            return 0;
        }
        if (serve_cmd->parsed()) return serve(config, port);
    } catch (const std::exception& e) {
        std::cerr << "protoflow: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
