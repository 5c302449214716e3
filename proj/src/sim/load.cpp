#include "protoflow/sim/load.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <random>
#include <thread>

#include "protoflow/admin/host.hpp"
#include "protoflow/admin/server.hpp"
#include "protoflow/common/http.hpp"
#include "protoflow/gateway/outbox.hpp"
#include "protoflow/sched/clock.hpp"

namespace protoflow::sim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
    return v[std::min(i, v.size() - 1)];
}

} // namespace

json load_test(const LoadOptions& opts) {
    if (opts.rate <= 0 || opts.seconds <= 0 || opts.producers <= 0 || opts.cohort <= 0) {
        throw std::invalid_argument("load test needs a positive rate, duration, producer count and cohort");
    }
    std::string dir = opts.data_dir;
    const bool temporary = dir.empty();
    if (temporary) {
        dir = (fs::temp_directory_path() / ("protoflow-load-" + std::to_string(::getpid()))).string();
        fs::remove_all(dir);
    }
    struct Cleanup {
        bool on;
        std::string d;
        ~Cleanup() {
            if (on) fs::remove_all(d);
        }
    } cleanup{temporary, dir};

    const std::string token = "load-test-token-000000";
    admin::AdminConfig cfg;
    cfg.studies_dir = opts.packs_dir;
    cfg.data_dir = dir;
    cfg.tokens = {{token, "load"}};
    cfg.staff = {"+15559990000"};
    cfg.pool.numbers = {"+15550000001", "+15550000002", "+15550000003"};
    sched::SystemClock clock;
    admin::EngineHost host(cfg, clock);
    admin::AdminServer server(host);

    std::vector<std::string> addresses;
    host.run([&](runtime::Engine& e) {
        const auto sid = e.create_study({"load", "America/New_York", {}}, host.pack("tre")).study_id;
        for (int i = 0; i < opts.cohort; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "+1555%07d", 3000000 + i);
            addresses.push_back(buf);
            e.register_participant(sid, "load-" + std::to_string(i + 1), buf);
        }
        return 0;
    });

    const int port = server.bind("127.0.0.1", 0);
    std::thread serving([&] { server.listen(); });
    host.start();
    const auto url = "http://127.0.0.1:" + std::to_string(port) + "/gateway/inbound";
    const std::map<std::string, std::string> headers{{"Authorization", "Bearer " + token}};

    // Alternate STARTCAL and ENDCAL per participant; one message in 28 is malformed.
    const auto total = static_cast<std::size_t>(opts.rate * opts.seconds);
    std::vector<std::string> bodies(total);
    {
        std::vector<int> phase(opts.cohort, 0);
        std::mt19937_64 rng(1);
        for (std::size_t k = 0; k < total; ++k) {
            const auto who = k % opts.cohort;
            if (rng() % 28 == 0) {
                bodies[k] = "startcal7";
            } else {
                bodies[k] = phase[who]++ % 2 == 0 ? "STARTCAL" : "ENDCAL";
            }
        }
    }

    using Steady = std::chrono::steady_clock;
    const auto t0 = Steady::now() + std::chrono::milliseconds(200);
    std::vector<double> latency_ms(total, -1);
    std::vector<Steady::time_point> done(total);
    std::atomic<std::size_t> failures{0};
    std::vector<std::thread> producers;
    for (int p = 0; p < opts.producers; ++p) {
        producers.emplace_back([&, p] {
            for (std::size_t k = p; k < total; k += opts.producers) {
                const auto due = t0 + std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 * k / opts.rate));
                std::this_thread::sleep_until(due);
                const json body{{"from", addresses[k % opts.cohort]}, {"body", bodies[k]}};
                auto r = http_post(url, headers, body.dump(), "application/json", std::chrono::seconds(10));
                done[k] = Steady::now();
                if (r.status == 200) {
                    latency_ms[k] = std::chrono::duration<double, std::milli>(done[k] - due).count();
                } else {
                    ++failures;
                }
            }
        });
    }
    for (auto& t : producers) t.join();
    host.stop();
    server.stop();
    serving.join();

    std::vector<double> ok;
    Steady::time_point last = t0;
    for (std::size_t k = 0; k < total; ++k) {
        if (latency_ms[k] >= 0) {
            ok.push_back(latency_ms[k]);
            last = std::max(last, done[k]);
        }
    }
    const double elapsed = std::chrono::duration<double>(last - t0).count();
    const auto stats = host.run([](runtime::Engine& e) { return e.stats(); });
    return {{"offered_rate", opts.rate},
            {"seconds", opts.seconds},
            {"producers", opts.producers},
            {"offered", total},
            {"processed", ok.size()},
            {"failed", failures.load()},
            {"elapsed_seconds", elapsed},
            {"processed_per_second", elapsed > 0 ? static_cast<double>(ok.size()) / elapsed : 0.0},
            {"latency_ms", {{"p50", percentile(ok, 0.50)}, {"p99", percentile(ok, 0.99)}, {"max", percentile(ok, 1.0)}}},
            {"engine", {{"messages_in", stats.messages_in},
                        {"unrecognized", stats.unrecognized},
                        {"messages_sent", stats.messages_sent},
                        {"transitions", stats.transitions}}}};
}

json outbound_burst(int count, int pool_size) {
    if (count < 0 || pool_size < 1) throw std::invalid_argument("burst needs count >= 0 and at least one number");
    gateway::NumberPool pool;
    for (int i = 0; i < pool_size; ++i) pool.numbers.push_back("+1555000" + std::to_string(1000 + i));
    gateway::Outbox outbox(pool);
    const auto t0 = parse_rfc3339("2021-09-09T12:00:00Z");
    sched::VirtualClock clock(t0);
    for (int i = 0; i < count; ++i) {
        gateway::OutboundMessage m;
        m.message_id = "burst-" + std::to_string(i);
        m.to_address = "+1555400" + std::to_string(1000 + i);
        m.body = "reminder";
        m.created_at = t0;
        outbox.enqueue(std::move(m), t0);
    }
    std::vector<Instant> sends;
    std::map<std::string, std::vector<Instant>> by_number;
    auto send = [&](const gateway::OutboundMessage& m, Instant now) {
        sends.push_back(now);
        by_number[m.sender].push_back(now);
        return gateway::SendResult{};
    };
    while (true) {
        outbox.dispatch(clock.now(), send);
        auto next = outbox.next_wakeup(clock.now());
        if (!next) break;
        clock.set(std::max(*next, clock.now()));
    }
    // Busiest window [t, t + 1s) over the dispatch times, overall and per number.
    auto busiest = [](const std::vector<Instant>& ts) {
        std::size_t best = 0, lo = 0;
        for (std::size_t hi = 0; hi < ts.size(); ++hi) {
            while (ts[hi] - ts[lo] >= std::chrono::seconds(1)) ++lo;
            best = std::max(best, hi - lo + 1);
        }
        return best;
    };
    std::size_t per_number = 0;
    for (const auto& [_, ts] : by_number) per_number = std::max(per_number, busiest(ts));
    const auto drain = sends.empty() ? Duration::zero() : sends.back() - t0;
    return {{"count", count},
            {"pool_size", pool_size},
            {"dispatched", sends.size()},
            {"max_in_one_second", busiest(sends)},
            {"max_per_number_in_one_second", per_number},
            {"drain_ms", drain.count()}};
}

} // namespace protoflow::sim
