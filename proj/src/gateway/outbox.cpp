#include "protoflow/gateway/outbox.hpp"

#include <set>

namespace protoflow::gateway {

Outbox::Outbox(NumberPool pool, RetryPolicy retry) : limiter_(std::move(pool)), retry_(retry) {}

void Outbox::enqueue(OutboundMessage m, Instant now) {
    if (!is_chat_address(m.to_address) && limiter_.pool().numbers.empty()) {
        throw NoCapacity("no sender numbers configured; cannot send to " + m.to_address);
    }
    queue_.push_back({std::move(m), now});
}

std::vector<DispatchOutcome> Outbox::dispatch(Instant now, const SendFn& send) {
    std::vector<DispatchOutcome> out;
    std::set<std::string> blocked;
    bool pool_exhausted = false;
    std::vector<Entry> keep;
    keep.reserve(queue_.size());
    for (auto& e : queue_) {
        const auto& to = e.message.to_address;
        const bool chat = is_chat_address(to);
        if (blocked.count(to) || e.not_before > now || (!chat && pool_exhausted)) {
            blocked.insert(to);
            keep.push_back(std::move(e));
            continue;
        }
        if (chat) {
            e.message.sender = "web";
        } else {
            auto number = limiter_.try_acquire(now);
            if (!number) {
                pool_exhausted = true;
                blocked.insert(to);
                keep.push_back(std::move(e));
                continue;
            }
            e.message.sender = *number;
        }
        ++e.message.send_attempts;
        auto result = send(e.message, now);
        DispatchOutcome o;
        o.at = now;
        if (result.ok) {
            e.message.sent_at = now;
            o.status = DispatchStatus::sent;
            o.message = e.message;
        } else if (e.message.send_attempts >= retry_.max_attempts) {
            o.status = DispatchStatus::failed;
            o.error = result.error;
            o.message = e.message;
        } else {
            e.not_before = now + retry_.base_backoff * (1LL << (e.message.send_attempts - 1));
            o.status = DispatchStatus::retry;
            o.error = result.error;
            o.retry_at = e.not_before;
            o.message = e.message;
            blocked.insert(to);
            keep.push_back(std::move(e));
        }
        out.push_back(std::move(o));
    }
    queue_ = std::move(keep);
    return out;
}

std::optional<Instant> Outbox::next_wakeup(Instant now) const {
    std::optional<Instant> best;
    std::set<std::string> seen;
    auto consider = [&](Instant t) {
        if (!best || t < *best) best = t;
    };
    for (const auto& e : queue_) {
        if (!seen.insert(e.message.to_address).second) continue;  // only heads per recipient can move
        if (e.not_before > now) {
            consider(e.not_before);
        } else if (is_chat_address(e.message.to_address)) {
            consider(now);
        } else if (auto t = limiter_.next_free(now)) {
            consider(*t);
        }
    }
    return best;
}

std::vector<OutboundMessage> Outbox::pending_messages() const {
    std::vector<OutboundMessage> out;
    for (const auto& e : queue_) out.push_back(e.message);
    return out;
}

nlohmann::json Outbox::encode() const {
    auto pending = nlohmann::json::array();
    for (const auto& e : queue_) {
        pending.push_back({{"message", to_json(e.message)}, {"not_before", format_rfc3339(e.not_before)}});
    }
    return {{"pending", std::move(pending)}, {"limiter", limiter_.encode()}};
}

void Outbox::restore(const nlohmann::json& j) {
    queue_.clear();
    for (const auto& p : j.at("pending")) {
        queue_.push_back({outbound_from_json(p.at("message")), parse_rfc3339(p.at("not_before").get<std::string>())});
    }
    limiter_.restore(j.at("limiter"));
}

} // namespace protoflow::gateway
