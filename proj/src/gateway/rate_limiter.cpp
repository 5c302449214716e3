#include "protoflow/gateway/rate_limiter.hpp"

namespace protoflow::gateway {

using namespace std::chrono_literals;

int pool_capacity(const NumberPool& pool) {
    return static_cast<int>(pool.numbers.size()) * pool.per_number_outgoing_limit;
}

RateLimiter::RateLimiter(NumberPool pool) : pool_(std::move(pool)), sends_(pool_.numbers.size()) {}

int RateLimiter::in_window(std::size_t number, Instant now) const {
    int n = 0;
    for (auto it = sends_[number].rbegin(); it != sends_[number].rend() && *it > now - 1s; ++it) ++n;
    return n;
}

std::optional<std::string> RateLimiter::try_acquire(Instant now) {
    const auto count = pool_.numbers.size();
    for (std::size_t k = 0; k < count; ++k) {
        const auto i = (cursor_ + k) % count;
        auto& log = sends_[i];
        while (!log.empty() && log.front() <= now - 1s) log.pop_front();
        if (static_cast<int>(log.size()) < pool_.per_number_outgoing_limit) {
            log.push_back(now);
            cursor_ = (i + 1) % count;
            return pool_.numbers[i];
        }
    }
    return std::nullopt;
}

int RateLimiter::available(Instant now) const {
    int total = 0;
    for (std::size_t i = 0; i < sends_.size(); ++i) total += pool_.per_number_outgoing_limit - in_window(i, now);
    return total;
}

std::optional<Instant> RateLimiter::next_free(Instant now) const {
    std::optional<Instant> best;
    for (std::size_t i = 0; i < sends_.size(); ++i) {
        const int used = in_window(i, now);
        Instant t = now;
        if (used >= pool_.per_number_outgoing_limit) {
            // The oldest send inside the window frees its token one second later.
            const auto& log = sends_[i];
            t = log[log.size() - static_cast<std::size_t>(used)] + 1s;
        }
        if (!best || t < *best) best = t;
    }
    return best;
}

nlohmann::json RateLimiter::encode() const {
    auto logs = nlohmann::json::object();
    for (std::size_t i = 0; i < sends_.size(); ++i) {
        auto arr = nlohmann::json::array();
        for (auto t : sends_[i]) arr.push_back(format_rfc3339(t));
        logs[pool_.numbers[i]] = std::move(arr);
    }
    return {{"cursor", cursor_}, {"sends", std::move(logs)}};
}

void RateLimiter::restore(const nlohmann::json& j) {
    cursor_ = pool_.numbers.empty() ? 0 : j.at("cursor").get<std::size_t>() % pool_.numbers.size();
    const auto& logs = j.at("sends");
    for (std::size_t i = 0; i < pool_.numbers.size(); ++i) {
        sends_[i].clear();
        if (!logs.contains(pool_.numbers[i])) continue;
        for (const auto& t : logs.at(pool_.numbers[i])) sends_[i].push_back(parse_rfc3339(t.get<std::string>()));
    }
}

bool InboundRateCheck::record(const std::string& number, Instant at) {
    auto& log = arrivals_[number];
    while (!log.empty() && log.front() <= at - 1s) log.pop_front();
    log.push_back(at);
    if (static_cast<int>(log.size()) > limit_) {
        ++violations_;
        return false;
    }
    return true;
}

} // namespace protoflow::gateway
