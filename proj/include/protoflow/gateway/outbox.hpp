#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/gateway/message.hpp"
#include "protoflow/gateway/rate_limiter.hpp"

namespace protoflow::gateway {

struct SendResult {
    bool ok = true;
    std::string error;
};

/// Delivers one message at `now`; `m.sender` already names the pool number (or "web").
using SendFn = std::function<SendResult(const OutboundMessage& m, Instant now)>;

enum class DispatchStatus { sent, retry, failed };

struct DispatchOutcome {
    OutboundMessage message;  // after this attempt
    DispatchStatus status = DispatchStatus::sent;
    std::string error;
    Instant at{};
    std::optional<Instant> retry_at;
};

struct RetryPolicy {
    int max_attempts = 5;
    Duration base_backoff = std::chrono::seconds(1);  // doubled after each failure
};

/// Pending outbound queue in front of the rate limiter. Messages to one
/// recipient leave in creation order: a message waiting out a backoff holds
/// back everything queued after it for the same address. Chat addresses skip
/// the number pool.
class Outbox {
public:
    explicit Outbox(NumberPool pool, RetryPolicy retry = {});

    /// Throws NoCapacity for a phone recipient when the pool has no numbers.
    void enqueue(OutboundMessage m, Instant now);

    /// Sends everything that may leave at `now`, in queue order.
    std::vector<DispatchOutcome> dispatch(Instant now, const SendFn& send);

    /// When dispatch() can next make progress; nullopt when idle.
    std::optional<Instant> next_wakeup(Instant now) const;

    std::size_t pending() const { return queue_.size(); }
    std::vector<OutboundMessage> pending_messages() const;
    const RateLimiter& limiter() const { return limiter_; }
    const RetryPolicy& retry_policy() const { return retry_; }

    nlohmann::json encode() const;
    void restore(const nlohmann::json& j);

private:
    struct Entry {
        OutboundMessage message;
        Instant not_before{};
    };

    RateLimiter limiter_;
    RetryPolicy retry_;
    std::vector<Entry> queue_;
};

} // namespace protoflow::gateway
