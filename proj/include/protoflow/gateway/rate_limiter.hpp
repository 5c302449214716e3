#pragma once

#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"

namespace protoflow::gateway {

struct NumberPool {
    std::vector<std::string> numbers;
    int per_number_outgoing_limit = 100;  // per second
    int per_number_incoming_limit = 500;  // per second; checked by the simulator only
};

/// numbers × per-number outgoing limit, in messages per second.
int pool_capacity(const NumberPool& pool);

class NoCapacity : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-number token buckets with capacity `limit` where each token comes back
/// exactly one second after it was spent. A send at `t` is therefore allowed
/// iff the number made fewer than `limit` sends in (t - 1s, t], so no
/// one-second window ever sees more than `limit` sends.
class RateLimiter {
public:
    explicit RateLimiter(NumberPool pool);

    const NumberPool& pool() const { return pool_; }

    /// Spends a token from the next number (round-robin) that has one.
    std::optional<std::string> try_acquire(Instant now);
    /// Tokens available across the pool at `now`.
    int available(Instant now) const;
    /// Earliest instant >= now at which some number has a token; nullopt for an empty pool.
    std::optional<Instant> next_free(Instant now) const;

    nlohmann::json encode() const;
    void restore(const nlohmann::json& j);

private:
    int in_window(std::size_t number, Instant now) const;

    NumberPool pool_;
    std::vector<std::deque<Instant>> sends_;  // per number, oldest first
    std::size_t cursor_ = 0;
};

/// Arrival-rate validity check for simulated inbound traffic.
class InboundRateCheck {
public:
    explicit InboundRateCheck(int limit = 500) : limit_(limit) {}
    /// False when this arrival makes the number exceed its per-second limit.
    bool record(const std::string& number, Instant at);
    int violations() const { return violations_; }

private:
    int limit_;
    int violations_ = 0;
    std::map<std::string, std::deque<Instant>> arrivals_;
};

} // namespace protoflow::gateway
