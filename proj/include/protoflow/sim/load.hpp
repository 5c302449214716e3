#pragma once

#include <string>

#include <json.hpp>

namespace protoflow::sim {

struct LoadOptions {
    double rate = 40;     // offered messages per second
    int seconds = 60;
    int producers = 4;    // concurrent senders sharing the offered schedule
    int cohort = 163;
    std::string packs_dir;
    std::string data_dir;  // empty: a temporary directory, removed afterwards
};

/// Wall-clock load through the whole stack: producers post webhook payloads
/// over HTTP to a live admin server whose engine writes a durable audit log,
/// sends through the simulated gateway and uses the scripted language model.
///
/// processed_per_second is completed messages over the time from the first
/// scheduled send to the last completion. Latency runs from a message's
/// scheduled send time to its HTTP response.
nlohmann::json load_test(const LoadOptions& opts);

/// `count` outbound messages to distinct recipients queued at one instant,
/// drained through a pool of `pool_size` numbers under a virtual clock.
/// Reports the busiest one-second window and the drain time.
nlohmann::json outbound_burst(int count, int pool_size);

} // namespace protoflow::sim
