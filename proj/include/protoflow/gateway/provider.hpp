#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "protoflow/gateway/message.hpp"
#include "protoflow/gateway/outbox.hpp"

namespace protoflow::gateway {

/// Outbound side of a messaging provider.
class Provider {
public:
    virtual ~Provider() = default;
    virtual SendResult send(const OutboundMessage& m, Instant now) = 0;
};

struct SentRecord {
    OutboundMessage message;
    Instant at{};  // time of the accepted attempt
};

/// In-memory provider for tests and simulations. Faults are injected either
/// as "fail the next n attempts" or as a seeded failure probability.
class SimGateway final : public Provider {
public:
    SendResult send(const OutboundMessage& m, Instant now) override;

    void fail_next(int n);
    void set_failure_rate(double p, std::uint64_t seed);

    std::vector<SentRecord> sent() const;
    std::vector<SentRecord> sent_to(const std::string& address) const;
    std::size_t attempts() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::vector<SentRecord> sent_;
    std::size_t attempts_ = 0;
    int fail_next_ = 0;
    double failure_rate_ = 0.0;
    std::mt19937_64 rng_{0};
};

struct HttpProviderConfig {
    std::string endpoint;  // PF_SMS_ENDPOINT, default is the Twilio-style messages URL for the account
    std::string account;   // PF_SMS_ACCOUNT
    std::string token;     // PF_SMS_TOKEN
    std::vector<std::string> numbers;  // PF_SMS_NUMBERS, comma separated

    /// Nullopt unless account, token and at least one number are set.
    static std::optional<HttpProviderConfig> from_env();
};

/// Provider adapter that posts form-encoded messages to an SMS REST API with
/// basic auth. Chat messages never reach it.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}
    SendResult send(const OutboundMessage& m, Instant now) override;

private:
    HttpProviderConfig cfg_;
};

/// Webhook payload before validation: {from, body, media[], timestamp}.
struct RawMedia {
    std::string media_type;
    std::uint64_t size = 0;
    std::string url;
    std::string data;  // decoded bytes when the payload carried them inline
};

struct RawInbound {
    std::string from;
    std::string body;
    std::vector<RawMedia> media;
    std::optional<Instant> timestamp;
};

/// Accepts JSON ({"from","body","media":[{"content_type","size","url","data_base64"}],"timestamp"})
/// or form encoding (from/From, body/Body, NumMedia + MediaUrlN/MediaContentTypeN, timestamp).
/// Throws std::invalid_argument when `from` is missing or the payload is malformed.
RawInbound parse_webhook(const std::string& content_type, const std::string& body);

class BlobStore;

/// Inline media go to the blob store; linked media keep their URL as the
/// reference. received_at is the payload timestamp, else `now`.
InboundMessage accept_inbound(const RawInbound& raw, BlobStore* blobs, Instant now);

std::vector<std::string> split_numbers(const std::string& csv);

} // namespace protoflow::gateway
